#pragma once

#include "ctiforge/extraction.hpp"
#include "ctiforge/knowledge_base.hpp"
#include "ctiforge/model_gateway.hpp"
#include "ctiforge/types.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ctiforge::regex {

/// Where a substring sits inside the IOC; decides which wildcard replaces
/// it when it is attacker-controlled.
enum class SpanContext {
    CommandToken,   ///< \S+
    BackslashPath,  ///< [^\\]+
    SlashPath,      ///< [^/]+
    SingleQuoted,   ///< [^']+
    DoubleQuoted,   ///< [^"]+
};

std::string_view to_string(SpanContext context);

struct Substring {
    std::string text;
    std::size_t start = 0;
    std::size_t end = 0;
    SpanContext context = SpanContext::CommandToken;
    bool quoted = false;  ///< a whole quoted argument, recursed by classify_spans
};

enum class SpanRole { Capture, NonCapture };

std::string_view to_string(SpanRole role);

struct TokenSpan {
    std::string text;
    std::size_t start = 0;
    std::size_t end = 0;
    SpanRole role = SpanRole::NonCapture;
    SpanContext context = SpanContext::CommandToken;
    std::optional<extraction::Evidence> evidence;
};

struct ValidationReport {
    bool compiled = false;
    std::string compile_error;
    bool matches_original = false;
    std::vector<std::pair<std::string, bool>> matches_mutants;
    std::vector<std::pair<std::string, bool>> rejects_negatives;
    bool verdict = false;

    /// Human-readable description of the first failing check.
    std::string first_failure(std::string_view ioc) const;
};

enum class Origin { Model, Fallback, Literal };

std::string_view to_string(Origin origin);

struct RegexPattern {
    std::string pattern;
    IocType ioc_type = IocType::Filename;
    IocRef ioc_ref;
    std::string source;  ///< the IOC surface the pattern was built for
    std::vector<std::string> signature;
    std::vector<TokenSpan> spans;
    ValidationReport validation;
    int attempts = 0;
    Origin origin = Origin::Fallback;
    std::vector<IocRef> merged_ioc_refs;
};

// ============================================================================
// Dialect
// ============================================================================

inline constexpr std::string_view kDialect = "siem-safe";

/// Returns an error message when the pattern leaves the SIEM-safe subset
/// (leading (?i) only, no backreferences, no lookaround, no possessive or
/// atomic constructs), nullopt otherwise.
std::optional<std::string> dialect_violation(std::string_view pattern);

/// Compiles a SIEM-safe pattern with std::regex. Throws std::regex_error on
/// syntax errors and Error(ParseError) on dialect violations.
std::regex compile(std::string_view pattern);

bool full_match(const std::regex& re, std::string_view subject);

std::string escape(std::string_view literal);

std::string wildcard_for(SpanContext context);

// ============================================================================
// Pipeline steps
// ============================================================================

/// Splits a structured IOC into substrings with byte offsets. Throws
/// Error(UnsupportedType) for hash, ip_address and domain.
std::vector<Substring> split_ioc(std::string_view surface, IocType type);
std::vector<Substring> split_ioc(const extraction::IocRecord& record);

struct ClassifyOptions {
    double similarity_threshold = kb::kDefaultSimilarityThreshold;
};

/// Labels each substring capture (knowledge-store hit) or non-capture.
/// Whole quoted arguments are recursed: key= scaffolding stays capture and
/// the embedded value is classified on its own.
std::vector<TokenSpan> classify_spans(const std::vector<Substring>& substrings, const kb::VectorStore& store,
                                      gateway::Gateway& gw, const ClassifyOptions& options = {});

/// Ordered, case-folded capture texts.
std::vector<std::string> signature_of(const std::vector<TokenSpan>& spans);

/// Deterministic construction: capture spans escaped, non-capture spans
/// replaced by their context wildcard, command-line spaces as \s+.
std::string fallback_pattern(std::string_view surface, IocType type, const std::vector<TokenSpan>& spans);

struct MutationOptions {
    int mutants_per_span = 4;
    std::uint64_t seed = 0x5eed;
};

/// Copies of `surface` with every non-capture span replaced by random
/// tokens from [A-Za-z0-9_].
std::vector<std::string> make_mutants(std::string_view surface, const std::vector<TokenSpan>& spans,
                                      int count, std::mt19937_64& rng);

/// Copies of `surface` with one capture span deleted or corrupted.
std::vector<std::string> make_negatives(std::string_view surface, const std::vector<TokenSpan>& spans);

/// Runs the tester: compile, full-match original, accept mutants of every
/// non-capture span, reject corruptions of every capture span.
ValidationReport validate_regex(std::string_view pattern, std::string_view surface,
                                const std::vector<TokenSpan>& spans, const MutationOptions& options = {});

/// Pulls a regex out of a model answer: a JSON {"regex": ...} object, a
/// fenced code block, or the first non-empty line.
std::string extract_pattern(std::string_view response);

struct SynthesisOptions {
    int max_attempts = 4;
    MutationOptions mutation;
};

/// Model-driven generation with tester feedback; falls back to the
/// deterministic template when attempts run out.
RegexPattern synthesize_regex(const extraction::IocRecord& record, const std::vector<TokenSpan>& spans,
                              gateway::Gateway& gw, const gateway::PromptLibrary& prompts,
                              const SynthesisOptions& options = {});

/// Escaped literal for hash, ip_address and domain records.
RegexPattern synthesize_literal(const extraction::IocRecord& record);

/// One representative per (ioc_type, signature): the lexicographically
/// smallest pattern, carrying every merged IOC ref.
std::vector<RegexPattern> dedup_patterns(const std::vector<RegexPattern>& patterns);

}  // namespace ctiforge::regex
