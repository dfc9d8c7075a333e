#pragma once

#include "ctiforge/diagnostics.hpp"
#include "ctiforge/ingest.hpp"
#include "ctiforge/knowledge_base.hpp"
#include "ctiforge/model_gateway.hpp"
#include "ctiforge/types.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctiforge::extraction {

struct IocCandidate {
    std::string surface;
    IocType ioc_type = IocType::Filename;
    ParagraphRef paragraph_ref;
    int run_index = 0;
};

struct VoteTally {
    IocRef key;
    std::string surface;  ///< most frequent raw spelling among the votes
    ParagraphRef paragraph_ref;
    int votes = 0;
    int runs_total = 0;
};

enum class Status { Retained, Adjusted, Rejected };

std::string_view to_string(Status status);

/// Why a record was kept.
struct Evidence {
    std::string method;  ///< "lexical", "vector" or "structural"
    std::string detail;  ///< matched entry text or the structural check name
    std::optional<kb::EntryKind> kind;
    std::optional<double> score;
};

struct IocRecord {
    std::string canonical;
    std::string surface;  ///< original spelling, after any adjustment
    IocType ioc_type = IocType::Filename;
    ParagraphRef paragraph_ref;
    int votes = 0;
    int runs_total = 0;
    std::optional<Evidence> evidence;
    Status status = Status::Rejected;
    std::string reason;  ///< rejection reason; empty otherwise

    IocRef ref() const { return IocRef{ioc_type, canonical}; }
    bool kept() const { return status != Status::Rejected; }
};

/// Issues `runs` completions for one paragraph and pools the parsed
/// candidates. A response that is not a JSON array of {surface, type}
/// contributes nothing and leaves a diagnostic.
std::vector<IocCandidate> extract_candidates(const ingest::Paragraph& paragraph, int runs,
                                             gateway::Gateway& gw,
                                             const gateway::PromptLibrary& prompts,
                                             Diagnostics& diagnostics, double temperature = 0.7);

/// Parses one extraction response. Returns nullopt when the response is
/// not a JSON array at all; items with a missing or unknown type are
/// skipped and reported through `item_errors`.
std::optional<std::vector<std::pair<std::string, IocType>>> parse_extraction_response(
    std::string_view response, std::vector<std::string>& item_errors);

/// Replaces the common defanging forms ("[.]", "(.)", "hxxp") with their
/// live equivalents.
std::string refang(std::string_view s);

/// Normalized voting key for a surface string of the given type.
std::string normalize_candidate(std::string_view surface, IocType type);
inline std::string normalize_candidate(const IocCandidate& c) {
    return normalize_candidate(c.surface, c.ioc_type);
}

/// Groups by normalized (key, type) and keeps those seen in at least
/// `threshold` distinct runs, sorted by votes descending then key.
std::vector<VoteTally> majority_vote(const std::vector<IocCandidate>& candidates, int runs, int threshold);

bool is_valid_hash(std::string_view s);
bool is_valid_ipv4(std::string_view s);
bool is_valid_ip(std::string_view s);
bool is_valid_domain(std::string_view s);

/// First token of a command line with surrounding quotes removed.
std::string command_program(std::string_view command_line);

struct FilterOptions {
    double similarity_threshold = kb::kDefaultSimilarityThreshold;
};

/// Routes a voted tally to the structural validator or knowledge-store
/// check for its type and returns the purified record.
IocRecord kb_filter(const VoteTally& tally, const kb::VectorStore& store, gateway::Gateway& gw,
                    const FilterOptions& options = {});

}  // namespace ctiforge::extraction
