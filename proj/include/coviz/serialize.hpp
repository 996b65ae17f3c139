#pragma once

// JSON mappings for the value types that cross file and HTTP boundaries.

#include "coviz/highway_sim.hpp"
#include "coviz/hra_agent.hpp"

#include <json.hpp>

#include <string>

namespace coviz
{
    using json = nlohmann::json;

    // 64-bit stream state travels as a hex string so JS/Python readers keep every bit.
    std::string toHex(std::uint64_t value);
    std::uint64_t fromHex(const std::string& text);

    void to_json(json& j, const Vehicle& v);
    void from_json(const json& j, Vehicle& v);
    void to_json(json& j, const SimState& s);
    void from_json(const json& j, SimState& s);
    void to_json(json& j, const RewardWeights& w);
    void from_json(const json& j, RewardWeights& w);
    void to_json(json& j, const RewardVector& r);
    void from_json(const json& j, RewardVector& r);
    void to_json(json& j, const EnvConfig& c);
    void from_json(const json& j, EnvConfig& c);
    void to_json(json& j, const Observation& o);
    void from_json(const json& j, Observation& o);
    void to_json(json& j, const Hyperparams& h);
    void from_json(const json& j, Hyperparams& h);
    void to_json(json& j, const TrainingMeta& m);
    void from_json(const json& j, TrainingMeta& m);

    json decomposedQToJson(const DecomposedQ& q);
    DecomposedQ decomposedQFromJson(const json& j);

    std::string_view collisionHeadName(CollisionHead mode) noexcept;
    CollisionHead parseCollisionHead(std::string_view text);

    // Canonical single-line text; object keys sorted, shortest round-trip doubles.
    std::string canonicalDump(const json& j);
}
