#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctiforge::ingest {

enum class FormatHint { Plain, Markdown, Html };

std::optional<FormatHint> parse_format(std::string_view name);

/// Guesses the format from a file extension (.html/.htm, .md/.markdown).
FormatHint format_from_path(std::string_view path);

struct CtiReport {
    std::string source_id;
    std::string raw_text;  ///< plain text, markup already stripped
    FormatHint format_hint = FormatHint::Plain;
};

struct Paragraph {
    std::string report_id;
    int index = 0;
    std::string text;
    int sentence_count = 0;
};

/// Loads a report; `source_id` defaults to the file stem.
/// Throws Error(FileNotFound) or Error(EmptyDocument).
CtiReport load_report(const std::string& path, FormatHint hint);

/// Builds a report from in-memory text with the same stripping rules as
/// load_report.
CtiReport make_report(std::string source_id, std::string_view bytes, FormatHint hint);

std::string strip_html(std::string_view html);
std::string strip_markdown(std::string_view markdown);

/// Rule-based sentence splitter. Returned sentences are whitespace-collapsed.
std::vector<std::string> split_sentences(std::string_view text);

/// Greedy packing of consecutive sentences into paragraphs of
/// `target_sentences` (3 or 4); the final paragraph may be shorter.
std::vector<Paragraph> segment_paragraphs(const CtiReport& report, int target_sentences = 4);

}  // namespace ctiforge::ingest
