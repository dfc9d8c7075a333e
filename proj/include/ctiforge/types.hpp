#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace ctiforge {

enum class IocType {
    Filename,
    CommandLine,
    RegistryKey,
    RegistryValue,
    IpAddress,
    Domain,
    Hash,
};

std::string_view to_string(IocType type);
std::optional<IocType> parse_ioc_type(std::string_view text);

/// True for the types whose regexes are built from classified spans rather
/// than escaped literals.
bool is_structured(IocType type);

struct ParagraphRef {
    std::string report_id;
    int index = 0;

    auto operator<=>(const ParagraphRef&) const = default;
};

/// Identity of a purified IOC across the pipeline: its type plus the
/// normalized key that voting grouped on.
struct IocRef {
    IocType type = IocType::Filename;
    std::string canonical;

    auto operator<=>(const IocRef&) const = default;
};

}  // namespace ctiforge
