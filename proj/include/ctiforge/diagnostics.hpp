#pragma once

#include <compare>
#include <string>
#include <vector>

namespace ctiforge {

/// One audit line for the run manifest: parse failures, rejections,
/// demotions and similar events that do not abort a run.
struct Diagnostic {
    std::string stage;    ///< e.g. "extract_iocs", "kb_filter", "verify_edge"
    std::string subject;  ///< what it is about (report/paragraph, IOC, edge)
    std::string message;

    auto operator<=>(const Diagnostic&) const = default;
};

using Diagnostics = std::vector<Diagnostic>;

}  // namespace ctiforge
