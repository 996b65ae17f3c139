#include "coviz/serialize.hpp"

#include <charconv>
#include <cstdio>

namespace coviz
{
    std::string toHex(std::uint64_t value)
    {
        char buf[19];
        std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(value));
        return buf;
    }

    std::uint64_t fromHex(const std::string& text)
    {
        std::string_view digits = text;
        if (digits.starts_with("0x") || digits.starts_with("0X"))
            digits.remove_prefix(2);
        std::uint64_t value = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value, 16);
        if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty())
            throw std::invalid_argument("invalid hex word: " + text);
        return value;
    }

    void to_json(json& j, const Vehicle& v)
    {
        j = json{{"lane", v.lane}, {"x", v.x}, {"speed_level", v.speed_level}};
    }

    void from_json(const json& j, Vehicle& v)
    {
        j.at("lane").get_to(v.lane);
        j.at("x").get_to(v.x);
        j.at("speed_level").get_to(v.speed_level);
    }

    void to_json(json& j, const SimState& s)
    {
        j = json{{"ego", s.ego},
                 {"others", s.others},
                 {"step_index", s.step_index},
                 {"collided", s.collided},
                 {"rng_state", toHex(s.rng_state)}};
    }

    void from_json(const json& j, SimState& s)
    {
        j.at("ego").get_to(s.ego);
        j.at("others").get_to(s.others);
        j.at("step_index").get_to(s.step_index);
        j.at("collided").get_to(s.collided);
        s.rng_state = fromHex(j.at("rng_state").get<std::string>());
    }

    void to_json(json& j, const RewardWeights& w)
    {
        j = json{{"cl", w.cl}, {"hs", w.hs}, {"rml", w.rml}, {"col", w.col}};
    }

    void from_json(const json& j, RewardWeights& w)
    {
        j.at("cl").get_to(w.cl);
        j.at("hs").get_to(w.hs);
        j.at("rml").get_to(w.rml);
        j.at("col").get_to(w.col);
    }

    void to_json(json& j, const RewardVector& r)
    {
        j = json{{"cl", r.cl}, {"hs", r.hs}, {"rml", r.rml}, {"col", r.col}};
    }

    void from_json(const json& j, RewardVector& r)
    {
        j.at("cl").get_to(r.cl);
        j.at("hs").get_to(r.hs);
        j.at("rml").get_to(r.rml);
        j.at("col").get_to(r.col);
    }

    void to_json(json& j, const EnvConfig& c)
    {
        j = json{{"lanes", c.lanes},
                 {"other_vehicles", c.other_vehicles},
                 {"speeds", c.speeds},
                 {"traffic_speeds", c.traffic_speeds},
                 {"episode_cap", c.episode_cap},
                 {"car_length", c.car_length},
                 {"dt", c.dt},
                 {"ego_start_lane", c.ego_start_lane},
                 {"ego_start_speed_level", c.ego_start_speed_level},
                 {"spawn_min", c.spawn_min},
                 {"spawn_max", c.spawn_max},
                 {"respawn_min", c.respawn_min},
                 {"respawn_max", c.respawn_max},
                 {"despawn_behind", c.despawn_behind},
                 {"min_spawn_gap", c.min_spawn_gap},
                 {"spawn_attempts", c.spawn_attempts},
                 {"lookahead_ahead", c.lookahead_ahead},
                 {"lookahead_behind", c.lookahead_behind},
                 {"weights", c.weights}};
    }

    void from_json(const json& j, EnvConfig& c)
    {
        j.at("lanes").get_to(c.lanes);
        j.at("other_vehicles").get_to(c.other_vehicles);
        j.at("speeds").get_to(c.speeds);
        j.at("traffic_speeds").get_to(c.traffic_speeds);
        j.at("episode_cap").get_to(c.episode_cap);
        j.at("car_length").get_to(c.car_length);
        j.at("dt").get_to(c.dt);
        j.at("ego_start_lane").get_to(c.ego_start_lane);
        j.at("ego_start_speed_level").get_to(c.ego_start_speed_level);
        j.at("spawn_min").get_to(c.spawn_min);
        j.at("spawn_max").get_to(c.spawn_max);
        j.at("respawn_min").get_to(c.respawn_min);
        j.at("respawn_max").get_to(c.respawn_max);
        j.at("despawn_behind").get_to(c.despawn_behind);
        j.at("min_spawn_gap").get_to(c.min_spawn_gap);
        j.at("spawn_attempts").get_to(c.spawn_attempts);
        j.at("lookahead_ahead").get_to(c.lookahead_ahead);
        j.at("lookahead_behind").get_to(c.lookahead_behind);
        j.at("weights").get_to(c.weights);
    }

    void to_json(json& j, const Observation& o)
    {
        j = json{{"ego_lane", o.ego_lane},
                 {"ego_speed_level", o.ego_speed_level},
                 {"occupancy", o.occupancy},
                 {"at_right_most", o.at_right_most},
                 {"key", o.label()}};
    }

    void from_json(const json& j, Observation& o)
    {
        j.at("ego_lane").get_to(o.ego_lane);
        j.at("ego_speed_level").get_to(o.ego_speed_level);
        j.at("occupancy").get_to(o.occupancy);
        j.at("at_right_most").get_to(o.at_right_most);
    }

    std::string_view collisionHeadName(CollisionHead mode) noexcept
    {
        return mode == CollisionHead::FoldUniform ? "uniform" : "separate";
    }

    CollisionHead parseCollisionHead(std::string_view text)
    {
        if (text == "uniform")
            return CollisionHead::FoldUniform;
        if (text == "separate" || text == "none")
            return CollisionHead::Separate;
        throw ConfigError("fold_collision must be 'separate' or 'uniform', got '" + std::string(text) + "'");
    }

    void to_json(json& j, const Hyperparams& h)
    {
        j = json{{"alpha", h.alpha},
                 {"gamma", h.gamma},
                 {"epsilon_start", h.epsilon_start},
                 {"epsilon_end", h.epsilon_end},
                 {"epsilon_decay_episodes", h.decayEpisodes()},
                 {"episodes", h.episodes},
                 {"seed", h.seed},
                 {"fold_collision", collisionHeadName(h.collision_head)}};
    }

    void from_json(const json& j, Hyperparams& h)
    {
        j.at("alpha").get_to(h.alpha);
        j.at("gamma").get_to(h.gamma);
        j.at("epsilon_start").get_to(h.epsilon_start);
        j.at("epsilon_end").get_to(h.epsilon_end);
        h.epsilon_decay_episodes = j.at("epsilon_decay_episodes").get<int>();
        j.at("episodes").get_to(h.episodes);
        j.at("seed").get_to(h.seed);
        h.collision_head = parseCollisionHead(j.at("fold_collision").get<std::string>());
    }

    void to_json(json& j, const TrainingMeta& m)
    {
        j = json{{"episodes_run", m.episodes_run}, {"env_steps", m.env_steps}, {"collisions", m.collisions}};
    }

    void from_json(const json& j, TrainingMeta& m)
    {
        j.at("episodes_run").get_to(m.episodes_run);
        j.at("env_steps").get_to(m.env_steps);
        j.at("collisions").get_to(m.collisions);
    }

    json decomposedQToJson(const DecomposedQ& q)
    {
        json out = json::object();
        for (std::size_t c = 0; c < kNumComponents; ++c)
        {
            out[std::string(kComponentLabels[c])] = q[c];
        }
        out["total"] = totalQ(q);
        return out;
    }

    DecomposedQ decomposedQFromJson(const json& j)
    {
        DecomposedQ q{};
        for (std::size_t c = 0; c < kNumComponents; ++c)
        {
            const json& row = j.at(std::string(kComponentLabels[c]));
            if (!row.is_array() || row.size() != kNumActions)
                throw std::invalid_argument("component row must hold 5 values");
            for (std::size_t a = 0; a < kNumActions; ++a)
            {
                q[c][a] = row[a].get<double>();
            }
        }
        return q;
    }

    std::string canonicalDump(const json& j)
    {
        return j.dump(-1, ' ', false, json::error_handler_t::strict);
    }
}
