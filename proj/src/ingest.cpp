#include "ctiforge/ingest.hpp"

#include "ctiforge/error.hpp"
#include "ctiforge/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <regex>

namespace ctiforge::ingest {

std::optional<FormatHint> parse_format(std::string_view name) {
    const std::string lower = text::to_lower(name);
    if (lower == "plain" || lower == "txt" || lower == "text") return FormatHint::Plain;
    if (lower == "markdown" || lower == "md") return FormatHint::Markdown;
    if (lower == "html" || lower == "htm") return FormatHint::Html;
    return std::nullopt;
}

FormatHint format_from_path(std::string_view path) {
    const std::string ext = text::to_lower(std::filesystem::path(path).extension().string());
    if (ext == ".html" || ext == ".htm") return FormatHint::Html;
    if (ext == ".md" || ext == ".markdown") return FormatHint::Markdown;
    return FormatHint::Plain;
}

// ============================================================================
// HTML
// ============================================================================

namespace {

void append_utf8(std::string& out, unsigned long cp) {
    if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Decodes one entity starting at html[i] == '&'. Returns consumed length,
// or 0 when the text is not an entity we recognise.
std::size_t decode_entity(std::string_view html, std::size_t i, std::string& out) {
    const std::size_t semi = html.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) return 0;
    const std::string_view body = html.substr(i + 1, semi - i - 1);
    if (body.empty()) return 0;

    if (body[0] == '#') {
        const bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
        const std::string digits(body.substr(hex ? 2 : 1));
        if (digits.empty()) return 0;
        try {
            std::size_t used = 0;
            const unsigned long cp = std::stoul(digits, &used, hex ? 16 : 10);
            if (used != digits.size()) return 0;
            append_utf8(out, cp);
        } catch (const std::exception&) {
            return 0;
        }
        return semi - i + 1;
    }

    static constexpr std::array<std::pair<std::string_view, std::string_view>, 8> kNamed{{
        {"amp", "&"}, {"lt", "<"}, {"gt", ">"}, {"quot", "\""},
        {"apos", "'"}, {"nbsp", " "}, {"ndash", "\xE2\x80\x93"}, {"mdash", "\xE2\x80\x94"},
    }};
    for (const auto& [name, value] : kNamed) {
        if (body == name) {
            out.append(value);
            return semi - i + 1;
        }
    }
    return 0;
}

bool is_block_tag(std::string_view name) {
    static constexpr std::array<std::string_view, 22> kBlock{
        "p", "div", "h1", "h2", "h3", "h4", "h5", "h6", "li", "ul", "ol",
        "tr", "table", "pre", "blockquote", "section", "article", "header",
        "footer", "dd", "dt", "hr"};
    return std::find(kBlock.begin(), kBlock.end(), name) != kBlock.end();
}

}  // namespace

std::string strip_html(std::string_view html) {
    std::string out;
    out.reserve(html.size());
    std::size_t i = 0;
    int pre_depth = 0;

    while (i < html.size()) {
        const char c = html[i];
        if (c == '&') {
            const std::size_t used = decode_entity(html, i, out);
            if (used > 0) {
                i += used;
                continue;
            }
            out.push_back(c);
            ++i;
            continue;
        }
        if (c != '<') {
            out.push_back(c);
            ++i;
            continue;
        }

        if (html.substr(i, 4) == "<!--") {
            const std::size_t end = html.find("-->", i + 4);
            i = end == std::string_view::npos ? html.size() : end + 3;
            continue;
        }

        const std::size_t lt = i;
        const std::size_t close = html.find('>', i);
        if (close == std::string_view::npos) {
            out.append(html.substr(i));
            break;
        }
        std::string_view tag = html.substr(i + 1, close - i - 1);
        const bool closing = !tag.empty() && tag.front() == '/';
        if (closing) tag.remove_prefix(1);
        std::size_t name_end = 0;
        while (name_end < tag.size() && (std::isalnum(static_cast<unsigned char>(tag[name_end])) != 0)) {
            ++name_end;
        }
        const std::string name = text::to_lower(tag.substr(0, name_end));
        i = close + 1;

        if (name.empty()) {
            // "<" that does not open a tag, e.g. "a < b"; "<!DOCTYPE" and "<?xml" are dropped.
            if (tag.empty() || (tag.front() != '!' && tag.front() != '?')) {
                out.push_back('<');
                i = lt + 1;
            }
            continue;
        }

        if (!closing && (name == "script" || name == "style")) {
            const std::string end_tag = "</" + name;
            std::size_t pos = i;
            while (pos < html.size()) {
                pos = html.find('<', pos);
                if (pos == std::string_view::npos) break;
                if (text::istarts_with(html.substr(pos), end_tag)) break;
                ++pos;
            }
            if (pos == std::string_view::npos) {
                i = html.size();
            } else {
                const std::size_t gt = html.find('>', pos);
                i = gt == std::string_view::npos ? html.size() : gt + 1;
            }
            continue;
        }

        if (name == "pre") pre_depth += closing ? -1 : 1;
        pre_depth = std::max(pre_depth, 0);

        if (name == "br") {
            out.push_back('\n');
        } else if (is_block_tag(name)) {
            out.append("\n\n");
        } else if (pre_depth == 0 && (name == "td" || name == "th")) {
            out.push_back(' ');
        }
    }
    return out;
}

// ============================================================================
// Markdown
// ============================================================================

std::string strip_markdown(std::string_view markdown) {
    static const std::regex kHeading(R"(^\s{0,3}#{1,6}\s+(.*?)\s*#*\s*$)");
    static const std::regex kBlockquote(R"(^\s*(>\s?)+)");
    static const std::regex kList(R"(^\s*([-*+]|\d+[.)])\s+)");
    static const std::regex kRule(R"(^\s*([-*_]\s*){3,}$)");
    static const std::regex kRefDef(R"(^\s*\[[^\]]+\]:\s+\S+.*$)");
    static const std::regex kTableSep(R"(^\s*\|?(\s*:?-+:?\s*\|)+\s*:?-*:?\s*$)");
    static const std::regex kImage(R"(!\[([^\]]*)\]\([^)]*\))");
    static const std::regex kLink(R"(\[([^\]]+)\]\([^)]*\))");
    static const std::regex kBold(R"((\*\*|__)(\S(?:.*?\S)?)\1)");
    static const std::regex kEmphasis(R"((^|[\s(])\*([^\s*](?:[^*]*[^\s*])?)\*(?=$|[\s).,;:!?]))");
    static const std::regex kInlineCode(R"(`([^`]*)`)");

    std::string out;
    bool in_fence = false;
    std::size_t start = 0;
    while (start <= markdown.size()) {
        std::size_t end = markdown.find('\n', start);
        if (end == std::string_view::npos) end = markdown.size();
        std::string line(markdown.substr(start, end - start));
        if (!line.empty() && line.back() == '\r') line.pop_back();
        start = end + 1;

        const std::string_view trimmed = text::trim(line);
        if (trimmed.rfind("```", 0) == 0 || trimmed.rfind("~~~", 0) == 0) {
            in_fence = !in_fence;
            out.push_back('\n');
            continue;
        }
        if (in_fence) {
            out.append(line);
            out.push_back('\n');
            continue;
        }
        if (std::regex_match(line, kRule) || std::regex_match(line, kRefDef) ||
            std::regex_match(line, kTableSep)) {
            out.push_back('\n');
            continue;
        }

        bool table_row = false;
        if (!trimmed.empty() && trimmed.front() == '|') {
            table_row = true;
            std::string row(trimmed);
            std::replace(row.begin(), row.end(), '|', ' ');
            line = row;
        }

        std::smatch m;
        if (std::regex_match(line, m, kHeading)) line = m[1].str() + "\n";
        line = std::regex_replace(line, kBlockquote, "");
        line = std::regex_replace(line, kList, "");
        line = std::regex_replace(line, kImage, "$1");
        line = std::regex_replace(line, kLink, "$1");
        line = std::regex_replace(line, kBold, "$2");
        line = std::regex_replace(line, kEmphasis, "$1$2");
        line = std::regex_replace(line, kInlineCode, "$1");

        out.append(line);
        out.append(table_row ? "\n\n" : "\n");
        if (end == markdown.size()) break;
    }
    return out;
}

// ============================================================================
// Loading
// ============================================================================

CtiReport make_report(std::string source_id, std::string_view bytes, FormatHint hint) {
    std::string decoded = text::sanitize_utf8(bytes);
    switch (hint) {
        case FormatHint::Html: decoded = strip_html(decoded); break;
        case FormatHint::Markdown: decoded = strip_markdown(decoded); break;
        case FormatHint::Plain: break;
    }
    const std::string_view trimmed = text::trim(decoded);
    if (trimmed.empty()) {
        throw Error(ErrorCode::EmptyDocument, "report '" + source_id + "' has no text");
    }
    return CtiReport{std::move(source_id), std::string(trimmed), hint};
}

CtiReport load_report(const std::string& path, FormatHint hint) {
    if (!std::filesystem::is_regular_file(path)) {
        throw Error(ErrorCode::FileNotFound, "report not found: " + path);
    }
    const std::string bytes = text::read_file(path);
    return make_report(std::filesystem::path(path).stem().string(), bytes, hint);
}

// ============================================================================
// Segmentation
// ============================================================================

namespace {

constexpr std::array<std::string_view, 20> kAbbreviations{
    "e.g.", "i.e.", "etc.", "vs.", "mr.", "mrs.", "ms.", "dr.", "fig.", "no.",
    "inc.", "corp.", "ltd.", "approx.", "cf.", "al.", "st.", "jr.", "u.s.", "viz."};

bool is_abbreviation(std::string_view block, std::size_t period) {
    std::size_t begin = period;
    while (begin > 0 && std::isspace(static_cast<unsigned char>(block[begin - 1])) == 0) --begin;
    std::string word = text::to_lower(block.substr(begin, period - begin + 1));
    while (!word.empty() && (word.front() == '(' || word.front() == '"' || word.front() == '\'')) {
        word.erase(word.begin());
    }
    return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

// Length of a closing quote/bracket at block[i], 0 if none.
std::size_t closer_length(std::string_view block, std::size_t i) {
    const char c = block[i];
    if (c == '"' || c == '\'' || c == ')' || c == ']') return 1;
    // U+201D and U+2019
    if (block.substr(i, 3) == "\xE2\x80\x9D" || block.substr(i, 3) == "\xE2\x80\x99") return 3;
    return 0;
}

bool opens_sentence(std::string_view block, std::size_t i) {
    const auto c = static_cast<unsigned char>(block[i]);
    if (std::isupper(c) != 0 || std::isdigit(c) != 0 || c == '"' || c == '\'') return true;
    // U+201C and U+2018
    return block.substr(i, 3) == "\xE2\x80\x9C" || block.substr(i, 3) == "\xE2\x80\x98";
}

void split_block(std::string_view block, std::vector<std::string>& sentences) {
    std::size_t sentence_start = 0;
    for (std::size_t i = 0; i < block.size(); ++i) {
        const char c = block[i];
        if (c != '.' && c != '!' && c != '?') continue;

        std::size_t j = i + 1;
        while (j < block.size()) {
            const std::size_t len = closer_length(block, j);
            if (len == 0) break;
            j += len;
        }
        if (j >= block.size() || std::isspace(static_cast<unsigned char>(block[j])) == 0) continue;
        std::size_t k = j;
        while (k < block.size() && std::isspace(static_cast<unsigned char>(block[k])) != 0) ++k;
        if (k >= block.size() || !opens_sentence(block, k)) continue;
        if (c == '.' && is_abbreviation(block, i)) continue;

        std::string sentence = text::collapse_whitespace(block.substr(sentence_start, j - sentence_start));
        if (!sentence.empty()) sentences.push_back(std::move(sentence));
        sentence_start = k;
        i = k - 1;
    }
    std::string tail = text::collapse_whitespace(block.substr(sentence_start));
    if (!tail.empty()) sentences.push_back(std::move(tail));
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view input) {
    static const std::regex kBlankLine(R"(\n[ \t\r\f\v]*\n)");
    const std::string text_copy(input);
    std::vector<std::string> sentences;
    std::sregex_token_iterator it(text_copy.begin(), text_copy.end(), kBlankLine, -1);
    for (; it != std::sregex_token_iterator(); ++it) {
        split_block(it->str(), sentences);
    }
    return sentences;
}

std::vector<Paragraph> segment_paragraphs(const CtiReport& report, int target_sentences) {
    if (target_sentences < 3 || target_sentences > 4) {
        throw Error(ErrorCode::InvalidArgument, "target_sentences must be 3 or 4");
    }
    const std::vector<std::string> sentences = split_sentences(report.raw_text);
    std::vector<Paragraph> paragraphs;
    for (std::size_t i = 0; i < sentences.size(); i += static_cast<std::size_t>(target_sentences)) {
        const std::size_t end = std::min(sentences.size(), i + static_cast<std::size_t>(target_sentences));
        std::vector<std::string> chunk(sentences.begin() + static_cast<std::ptrdiff_t>(i),
                                       sentences.begin() + static_cast<std::ptrdiff_t>(end));
        paragraphs.push_back(Paragraph{report.source_id, static_cast<int>(paragraphs.size()),
                                       text::join(chunk, " "), static_cast<int>(end - i)});
    }
    return paragraphs;
}

}  // namespace ctiforge::ingest
