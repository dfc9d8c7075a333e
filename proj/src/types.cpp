#include "ctiforge/error.hpp"
#include "ctiforge/types.hpp"

#include <array>
#include <utility>

namespace ctiforge {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::FileNotFound: return "FileNotFound";
        case ErrorCode::EmptyDocument: return "EmptyDocument";
        case ErrorCode::FixtureMiss: return "FixtureMiss";
        case ErrorCode::ProviderError: return "ProviderError";
        case ErrorCode::EmptyText: return "EmptyText";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::EmptyStore: return "EmptyStore";
        case ErrorCode::UnsupportedType: return "UnsupportedType";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

namespace {

constexpr std::array<std::pair<IocType, std::string_view>, 7> kIocTypeNames{{
    {IocType::Filename, "filename"},
    {IocType::CommandLine, "command_line"},
    {IocType::RegistryKey, "registry_key"},
    {IocType::RegistryValue, "registry_value"},
    {IocType::IpAddress, "ip_address"},
    {IocType::Domain, "domain"},
    {IocType::Hash, "hash"},
}};

}  // namespace

std::string_view to_string(IocType type) {
    for (const auto& [t, name] : kIocTypeNames) {
        if (t == type) return name;
    }
    return "unknown";
}

std::optional<IocType> parse_ioc_type(std::string_view text) {
    for (const auto& [t, name] : kIocTypeNames) {
        if (name == text) return t;
    }
    return std::nullopt;
}

bool is_structured(IocType type) {
    return type == IocType::Filename || type == IocType::CommandLine ||
           type == IocType::RegistryKey || type == IocType::RegistryValue;
}

}  // namespace ctiforge
