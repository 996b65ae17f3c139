#include "coviz/run_config.hpp"

#include "coviz/summary_select.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace coviz
{
    namespace
    {
        std::string_view trim(std::string_view s)
        {
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
                s.remove_prefix(1);
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
                s.remove_suffix(1);
            return s;
        }

        // Strips a trailing comment that is not inside a string literal.
        std::string_view stripComment(std::string_view line)
        {
            bool inString = false;
            for (std::size_t i = 0; i < line.size(); ++i)
            {
                if (line[i] == '"')
                    inString = !inString;
                else if (line[i] == '#' && !inString)
                    return line.substr(0, i);
            }
            return line;
        }

        std::optional<double> parseNumber(std::string_view s)
        {
            s = trim(s);
            if (s.empty())
                return std::nullopt;
            if (s.front() == '+')
                s.remove_prefix(1);
            double value = 0.0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
            if (ec != std::errc{} || ptr != s.data() + s.size())
                return std::nullopt;
            return value;
        }

        ConfigValue parseValue(std::string_view raw, const std::string& where)
        {
            const std::string_view v = trim(raw);
            if (v.empty())
                throw ConfigError(where + ": missing value");
            if (v == "true")
                return true;
            if (v == "false")
                return false;
            if (v.front() == '"')
            {
                if (v.size() < 2 || v.back() != '"')
                    throw ConfigError(where + ": unterminated string");
                return std::string(v.substr(1, v.size() - 2));
            }
            if (v.front() == '[')
            {
                if (v.back() != ']')
                    throw ConfigError(where + ": unterminated array");
                std::vector<double> values;
                std::string_view body = trim(v.substr(1, v.size() - 2));
                while (!body.empty())
                {
                    const auto comma = body.find(',');
                    const auto item = trim(body.substr(0, comma));
                    if (!item.empty())
                    {
                        auto n = parseNumber(item);
                        if (!n)
                            throw ConfigError(where + ": arrays may only hold numbers");
                        values.push_back(*n);
                    }
                    if (comma == std::string_view::npos)
                        break;
                    body = body.substr(comma + 1);
                }
                return values;
            }
            const bool integral = v.find_first_of(".eE") == std::string_view::npos;
            if (integral)
            {
                std::int64_t i = 0;
                std::string_view digits = v.front() == '+' ? v.substr(1) : v;
                auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), i);
                if (ec == std::errc{} && ptr == digits.data() + digits.size())
                    return i;
            }
            if (auto n = parseNumber(v))
                return *n;
            throw ConfigError(where + ": cannot parse value '" + std::string(v) + "'");
        }

        double asDouble(const ConfigValue& v, const std::string& key)
        {
            if (auto d = std::get_if<double>(&v))
                return *d;
            if (auto i = std::get_if<std::int64_t>(&v))
                return static_cast<double>(*i);
            throw ConfigError(key + " must be a number");
        }

        std::int64_t asInt(const ConfigValue& v, const std::string& key)
        {
            if (auto i = std::get_if<std::int64_t>(&v))
                return *i;
            throw ConfigError(key + " must be an integer");
        }

        int asInt32(const ConfigValue& v, const std::string& key)
        {
            const std::int64_t i = asInt(v, key);
            if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max())
                throw ConfigError(key + " out of range");
            return static_cast<int>(i);
        }

        std::uint64_t asSeed(const ConfigValue& v, const std::string& key)
        {
            const std::int64_t i = asInt(v, key);
            if (i < 0)
                throw ConfigError(key + " must be >= 0");
            return static_cast<std::uint64_t>(i);
        }

        std::string asString(const ConfigValue& v, const std::string& key)
        {
            if (auto s = std::get_if<std::string>(&v))
                return *s;
            throw ConfigError(key + " must be a string");
        }

        std::vector<double> asArray(const ConfigValue& v, const std::string& key)
        {
            if (auto a = std::get_if<std::vector<double>>(&v))
                return *a;
            throw ConfigError(key + " must be an array of numbers");
        }

        using Setter = std::function<void(RunConfig&, const ConfigValue&, const std::string&)>;

        const std::map<std::string, std::map<std::string, Setter>>& setters()
        {
            static const std::map<std::string, std::map<std::string, Setter>> table{
                {"env",
                 {
                     {"lanes", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.lanes = asInt32(v, k); }},
                     {"other_vehicles", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.other_vehicles = asInt32(v, k); }},
                     {"speeds", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.speeds = asArray(v, k); }},
                     {"traffic_speeds", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.traffic_speeds = asArray(v, k); }},
                     {"episode_cap", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.episode_cap = asInt32(v, k); }},
                     {"car_length", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.car_length = asDouble(v, k); }},
                     {"dt", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.dt = asDouble(v, k); }},
                     {"ego_start_lane", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.ego_start_lane = asInt32(v, k); }},
                     {"ego_start_speed_level", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.ego_start_speed_level = asInt32(v, k); }},
                     {"spawn_min", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.spawn_min = asDouble(v, k); }},
                     {"spawn_max", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.spawn_max = asDouble(v, k); }},
                     {"respawn_min", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.respawn_min = asDouble(v, k); }},
                     {"respawn_max", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.respawn_max = asDouble(v, k); }},
                     {"despawn_behind", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.despawn_behind = asDouble(v, k); }},
                     {"min_spawn_gap", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.min_spawn_gap = asDouble(v, k); }},
                     {"spawn_attempts", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.spawn_attempts = asInt32(v, k); }},
                     {"lookahead_ahead", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.lookahead_ahead = asDouble(v, k); }},
                     {"lookahead_behind", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.lookahead_behind = asDouble(v, k); }},
                     {"w_cl", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.weights.cl = asDouble(v, k); }},
                     {"w_hs", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.weights.hs = asDouble(v, k); }},
                     {"w_rml", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.weights.rml = asDouble(v, k); }},
                     {"w_col", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.env.weights.col = asDouble(v, k); }},
                 }},
                {"train",
                 {
                     {"alpha", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.train.alpha = asDouble(v, k); }},
                     {"gamma", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.train.gamma = asDouble(v, k); }},
                     {"epsilon_start", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.train.epsilon_start = asDouble(v, k); }},
                     {"epsilon_end", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.train.epsilon_end = asDouble(v, k); }},
                     {"epsilon_decay_episodes", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.train.epsilon_decay_episodes = asInt32(v, k); }},
                     {"episodes", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.train.episodes = asInt32(v, k); }},
                     {"seed", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.train.seed = asSeed(v, k); }},
                     {"fold_collision", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.train.collision_head = parseCollisionHead(asString(v, k)); }},
                 }},
                {"coviz",
                 {
                     {"k", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.coviz.k = asInt32(v, k); }},
                     {"nsim", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.coviz.nsim = asInt32(v, k); }},
                     {"cf_method", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
                          const auto m = CfMethod::parse(asString(v, k));
                          if (!m)
                              throw ConfigError(k + ": expected second_best, worst or user:<action>");
                          c.coviz.cf_method = *m;
                      }},
                     {"base_seed", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.coviz.base_seed = asSeed(v, k); }},
                     {"threads", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.coviz.threads = static_cast<unsigned>(asSeed(v, k)); }},
                 }},
                {"summary",
                 {
                     {"method", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.summary.method = asString(v, k); }},
                     {"n", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.summary.n = asInt32(v, k); }},
                     {"overlap", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.summary.overlap = asInt32(v, k); }},
                     {"seed", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.summary.seed = asSeed(v, k); }},
                 }},
            };
            return table;
        }
    }

    ConfigTable parseConfigText(std::string_view text, std::string_view source)
    {
        ConfigTable table;
        std::string section;
        std::size_t lineNo = 0;
        while (!text.empty())
        {
            const auto eol = text.find('\n');
            std::string_view line = text.substr(0, eol);
            text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
            ++lineNo;

            const std::string where = std::string(source) + ":" + std::to_string(lineNo);
            line = trim(stripComment(line));
            if (line.empty())
                continue;
            if (line.front() == '[')
            {
                if (line.back() != ']')
                    throw ConfigError(where + ": malformed section header");
                section = std::string(trim(line.substr(1, line.size() - 2)));
                if (section.empty())
                    throw ConfigError(where + ": empty section name");
                table[section];
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError(where + ": expected key = value");
            const std::string key(trim(line.substr(0, eq)));
            if (key.empty())
                throw ConfigError(where + ": empty key");
            auto& entries = table[section];
            if (entries.count(key))
                throw ConfigError(where + ": duplicate key '" + key + "'");
            entries.emplace(key, parseValue(line.substr(eq + 1), where));
        }
        return table;
    }

    ConfigTable parseConfigFile(const std::filesystem::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw ConfigError("cannot read config file: " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        return parseConfigText(buf.str(), path.string());
    }

    void RunConfig::validate() const
    {
        env.validate();
        train.validate();
        coviz.validate();
        if (summary.n < 1)
            throw ConfigError("n must be >= 1");
        if (summary.overlap < 0)
            throw ConfigError("overlap must be >= 0");
        if (!ImportanceMethod::parse(summary.method))
            throw ConfigError("unknown importance method '" + summary.method + "'");
    }

    RunConfig applyConfig(const ConfigTable& table, RunConfig config)
    {
        const auto& known = setters();
        for (const auto& [section, entries] : table)
        {
            const auto sec = known.find(section);
            if (sec == known.end())
            {
                if (section.empty() && entries.empty())
                    continue;
                throw ConfigError(section.empty() ? "config keys must live in a [section]"
                                                  : "unknown config section [" + section + "]");
            }
            for (const auto& [key, value] : entries)
            {
                const auto setter = sec->second.find(key);
                if (setter == sec->second.end())
                    throw ConfigError("unknown config key " + section + "." + key);
                setter->second(config, value, section + "." + key);
            }
        }
        config.validate();
        return config;
    }

    RunConfig loadRunConfig(const std::filesystem::path& path)
    {
        return applyConfig(parseConfigFile(path));
    }

    json toJson(const RunConfig& c)
    {
        return json{{"env", c.env},
                    {"train", c.train},
                    {"coviz",
                     {{"k", c.coviz.k},
                      {"nsim", c.coviz.nsim},
                      {"cf_method", c.coviz.cf_method.name()},
                      {"base_seed", c.coviz.base_seed}}},
                    {"summary",
                     {{"method", c.summary.method},
                      {"n", c.summary.n},
                      {"overlap", c.summary.overlap},
                      {"seed", c.summary.seed}}}};
    }
}
