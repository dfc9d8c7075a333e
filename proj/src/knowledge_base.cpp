#include "ctiforge/knowledge_base.hpp"

#include "ctiforge/error.hpp"
#include "ctiforge/text.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>

namespace ctiforge::kb {

using json = nlohmann::json;

namespace {

constexpr std::array<std::pair<EntryKind, std::string_view>, 5> kKindNames{{
    {EntryKind::Path, "path"},
    {EntryKind::Program, "program"},
    {EntryKind::Command, "command"},
    {EntryKind::Extension, "extension"},
    {EntryKind::RegistryRoot, "registry_root"},
}};

constexpr std::string_view kMagic = "CTFKB\x01\r\n";

}  // namespace

std::string_view to_string(EntryKind kind) {
    for (const auto& [k, name] : kKindNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

std::optional<EntryKind> parse_entry_kind(std::string_view text) {
    for (const auto& [k, name] : kKindNames) {
        if (name == text) return k;
    }
    return std::nullopt;
}

void VectorStore::add(KnowledgeEntry entry, EmbeddingVector vec) {
    if (entries_.empty() && dim_ == 0) dim_ = vec.dim();
    if (vec.dim() != dim_) {
        throw Error(ErrorCode::DimensionMismatch,
                    "vector for '" + entry.text + "' has dim " + std::to_string(vec.dim()) +
                        ", store has " + std::to_string(dim_));
    }
    entries_.push_back(std::move(entry));
    vectors_.push_back(std::move(vec));
}

// ============================================================================
// Persistence
// ============================================================================

namespace {

template <typename T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
    }
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& pos) {
    if (pos + sizeof(T) > bytes.size()) {
        throw Error(ErrorCode::ParseError, "truncated vector store");
    }
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    }
    pos += sizeof(T);
    return value;
}

}  // namespace

std::string VectorStore::serialize() const {
    std::string out(kMagic);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& vec : vectors_) {
        for (float v : vec.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    json table = json::array();
    for (const auto& e : entries_) {
        table.push_back({{"text", e.text}, {"kind", std::string(to_string(e.kind))}, {"source", e.source}});
    }
    const std::string table_text = table.dump();
    put_le<std::uint64_t>(out, table_text.size());
    out.append(table_text);
    return out;
}

VectorStore VectorStore::deserialize(std::string_view bytes) {
    if (bytes.substr(0, kMagic.size()) != kMagic) {
        throw Error(ErrorCode::ParseError, "not a vector store file");
    }
    std::size_t pos = kMagic.size();
    const auto dim = get_le<std::uint32_t>(bytes, pos);
    const auto count = get_le<std::uint32_t>(bytes, pos);

    std::vector<EmbeddingVector> vectors(count);
    for (auto& vec : vectors) {
        vec.values.resize(dim);
        for (auto& v : vec.values) v = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
    }
    const auto table_len = get_le<std::uint64_t>(bytes, pos);
    if (pos + table_len != bytes.size()) throw Error(ErrorCode::ParseError, "corrupt vector store table");
    const json table = json::parse(bytes.substr(pos));
    if (table.size() != count) throw Error(ErrorCode::ParseError, "entry table size mismatch");

    VectorStore store(dim);
    for (std::size_t i = 0; i < count; ++i) {
        const auto kind = parse_entry_kind(table[i].at("kind").get<std::string>());
        if (!kind) throw Error(ErrorCode::ParseError, "unknown entry kind in store");
        store.add(KnowledgeEntry{table[i].at("text").get<std::string>(), *kind,
                                 table[i].value("source", "")},
                  std::move(vectors[i]));
    }
    return store;
}

void VectorStore::save(const std::string& path) const { text::write_file(path, serialize()); }

VectorStore VectorStore::load(const std::string& path) { return deserialize(text::read_file(path)); }

// ============================================================================
// Build
// ============================================================================

std::vector<KnowledgeEntry> load_seed(const std::string& path) {
    std::istringstream in(text::read_file(path));
    std::vector<KnowledgeEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            const std::string entry_text(text::trim(j.at("text").get<std::string>()));
            const auto kind = parse_entry_kind(j.at("kind").get<std::string>());
            if (entry_text.empty() || !kind) throw Error(ErrorCode::ParseError, "bad text or kind");
            entries.push_back(KnowledgeEntry{entry_text, *kind, j.value("source", "")});
        } catch (const std::exception& e) {
            throw Error(ErrorCode::ParseError,
                        path + ":" + std::to_string(line_no) + ": invalid knowledge entry: " + e.what());
        }
    }
    return entries;
}

VectorStore build_store(const std::vector<KnowledgeEntry>& entries, gateway::Gateway& gw) {
    if (entries.empty()) throw Error(ErrorCode::InvalidArgument, "no knowledge entries to build from");
    VectorStore store;
    std::set<std::pair<std::string, EntryKind>> seen;
    for (const auto& entry : entries) {
        if (!seen.emplace(entry.text, entry.kind).second) {
            spdlog::warn("duplicate knowledge entry skipped: {} ({})", entry.text, to_string(entry.kind));
            continue;
        }
        store.add(entry, gw.embed(entry.text));
    }
    return store;
}

// ============================================================================
// Queries
// ============================================================================

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "dimension mismatch: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double x = a.values[i];
        const double y = b.values[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<Match> nearest(const VectorStore& store, const EmbeddingVector& query, int k) {
    if (store.empty()) throw Error(ErrorCode::EmptyStore, "nearest() on an empty store");
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");

    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        scored.emplace_back(cosine_similarity(store.vector(i), query), i);
    }
    const auto& entries = store.entries();
    const auto better = [&](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        if (entries[x.second].text != entries[y.second].text) {
            return entries[x.second].text < entries[y.second].text;
        }
        return x.second < y.second;
    };
    const std::size_t take = std::min(store.size(), static_cast<std::size_t>(k));
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);

    std::vector<Match> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.push_back(Match{entries[scored[i].second], scored[i].first});
    }
    return out;
}

namespace {

// prefix followed by a separator, or the whole string
bool has_component_prefix(std::string_view candidate, std::string_view prefix) {
    if (!text::istarts_with(candidate, prefix)) return false;
    if (candidate.size() == prefix.size()) return true;
    const char next = candidate[prefix.size()];
    const char last = prefix.back();
    return next == '\\' || next == '/' || last == '\\' || last == '/';
}

bool is_rooted_path(std::string_view text) {
    return text.find('\\') != std::string_view::npos || text.find('/') != std::string_view::npos ||
           text.find(':') != std::string_view::npos || text.front() == '%';
}

}  // namespace

std::optional<KnowledgeEntry> extension_of(const VectorStore& store, std::string_view candidate) {
    const std::string_view trimmed = text::trim(candidate);
    std::optional<KnowledgeEntry> best;
    for (const auto& e : store.entries()) {
        if (e.kind != EntryKind::Extension) continue;
        if (trimmed.size() > e.text.size() && text::iends_with(trimmed, e.text)) {
            if (!best || e.text.size() > best->text.size()) best = e;
        }
    }
    return best;
}

std::optional<KnowledgeEntry> lexical_probe(const VectorStore& store, std::string_view candidate) {
    const std::string_view trimmed = text::trim(candidate);
    if (trimmed.empty()) return std::nullopt;

    if (auto ext = extension_of(store, trimmed)) return ext;

    std::optional<KnowledgeEntry> best_path;
    std::optional<KnowledgeEntry> best_root;
    for (const auto& e : store.entries()) {
        if (e.kind == EntryKind::Path && is_rooted_path(e.text) && has_component_prefix(trimmed, e.text)) {
            if (!best_path || e.text.size() > best_path->text.size()) best_path = e;
        } else if (e.kind == EntryKind::RegistryRoot && has_component_prefix(trimmed, e.text)) {
            if (!best_root || e.text.size() > best_root->text.size()) best_root = e;
        }
    }
    if (best_path) return best_path;
    return best_root;
}

std::optional<KnowledgeEntry> exact_lookup(const VectorStore& store, std::string_view candidate,
                                           std::initializer_list<EntryKind> kinds) {
    const std::string_view trimmed = text::trim(candidate);
    for (const auto& e : store.entries()) {
        if (kinds.size() > 0 && std::find(kinds.begin(), kinds.end(), e.kind) == kinds.end()) continue;
        if (text::iequals(e.text, trimmed)) return e;
    }
    return std::nullopt;
}

}  // namespace ctiforge::kb
