#pragma once

#include "ctiforge/model_gateway.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctiforge::kb {

using gateway::EmbeddingVector;

enum class EntryKind { Path, Program, Command, Extension, RegistryRoot };

std::string_view to_string(EntryKind kind);
std::optional<EntryKind> parse_entry_kind(std::string_view text);

struct KnowledgeEntry {
    std::string text;
    EntryKind kind = EntryKind::Path;
    std::string source;

    bool operator==(const KnowledgeEntry&) const = default;
};

struct Match {
    KnowledgeEntry entry;
    double score = 0.0;  ///< cosine similarity
};

/// Flat, exhaustively scanned store of knowledge entries and their
/// embeddings. Immutable once built; concurrent reads are safe.
class VectorStore {
public:
    VectorStore() = default;
    explicit VectorStore(std::size_t dim) : dim_(dim) {}

    /// Appends an entry. Throws DimensionMismatch when the vector does not
    /// share the store's dimension.
    void add(KnowledgeEntry entry, EmbeddingVector vec);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<KnowledgeEntry>& entries() const { return entries_; }
    const EmbeddingVector& vector(std::size_t i) const { return vectors_.at(i); }

    /// Serialized form: magic, u32 dim, u32 count, count*dim little-endian
    /// f32 values, u64 table length, JSON entry table.
    std::string serialize() const;
    static VectorStore deserialize(std::string_view bytes);

    void save(const std::string& path) const;
    static VectorStore load(const std::string& path);

    bool operator==(const VectorStore&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<KnowledgeEntry> entries_;
    std::vector<EmbeddingVector> vectors_;
};

/// Reads line-delimited JSON {text, kind, source}; blank lines are skipped.
std::vector<KnowledgeEntry> load_seed(const std::string& path);

/// Embeds every entry through the gateway. Duplicate (text, kind) pairs are
/// skipped with a warning.
VectorStore build_store(const std::vector<KnowledgeEntry>& entries, gateway::Gateway& gw);

/// Throws DimensionMismatch or ZeroVector.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Top-k entries by cosine similarity; ties broken by entry text ascending.
std::vector<Match> nearest(const VectorStore& store, const EmbeddingVector& query, int k);

/// Structural checks that bypass embeddings: extension suffix, path prefix,
/// registry root prefix, tried in that priority order.
std::optional<KnowledgeEntry> lexical_probe(const VectorStore& store, std::string_view candidate);

/// Case-insensitive whole-string match against any entry, optionally
/// restricted to some kinds.
std::optional<KnowledgeEntry> exact_lookup(const VectorStore& store, std::string_view candidate,
                                           std::initializer_list<EntryKind> kinds = {});

/// The longest extension entry that `candidate` ends with, if any.
std::optional<KnowledgeEntry> extension_of(const VectorStore& store, std::string_view candidate);

inline constexpr double kDefaultSimilarityThreshold = 0.82;

}  // namespace ctiforge::kb
