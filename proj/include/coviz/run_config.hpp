#pragma once

#include "coviz/coviz_engine.hpp"
#include "coviz/hra_agent.hpp"
#include "coviz/serialize.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace coviz
{
    /// One scalar or array value from a `key = value` configuration line.
    using ConfigValue = std::variant<bool, std::int64_t, double, std::string, std::vector<double>>;

    /// Section -> key -> value. Keys outside any section live under "".
    using ConfigTable = std::map<std::string, std::map<std::string, ConfigValue>>;

    // Subset of TOML: [section] headers, `key = value` with numbers, booleans,
    // "strings" and flat numeric arrays, '#' comments.
    ConfigTable parseConfigText(std::string_view text, std::string_view source = "<config>");
    ConfigTable parseConfigFile(const std::filesystem::path& path);

    struct SummaryConfig
    {
        std::string method = "last-state";
        int n = 4;
        int overlap = 5;
        std::uint64_t seed = 0;  // frequency sampling

        bool operator==(const SummaryConfig&) const = default;
    };

    struct RunConfig
    {
        EnvConfig env;
        Hyperparams train;
        CovizConfig coviz;
        SummaryConfig summary;

        void validate() const;

        bool operator==(const RunConfig&) const = default;
    };

    // Applies a parsed table on top of `base`; unknown sections or keys are errors.
    RunConfig applyConfig(const ConfigTable& table, RunConfig base = {});
    RunConfig loadRunConfig(const std::filesystem::path& path);

    json toJson(const RunConfig& config);
}
