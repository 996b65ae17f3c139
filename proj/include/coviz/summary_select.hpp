#pragma once

#include "coviz/coviz_engine.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coviz
{
    enum class QDiffVariant : std::uint8_t
    {
        SecondBest,
        Worst,
    };

    struct ImportanceMethod
    {
        enum class Kind : std::uint8_t
        {
            LastState,
            QDiffSecondBest,
            QDiffWorst,
            Frequency,
        };

        Kind kind = Kind::LastState;
        std::uint64_t seed = 0;  // Frequency only

        static ImportanceMethod lastState() noexcept { return {}; }
        static ImportanceMethod qdiffSecondBest() noexcept { return {Kind::QDiffSecondBest, 0}; }
        static ImportanceMethod qdiffWorst() noexcept { return {Kind::QDiffWorst, 0}; }
        static ImportanceMethod frequency(std::uint64_t seed) noexcept { return {Kind::Frequency, seed}; }

        bool scoreBased() const noexcept { return kind != Kind::Frequency; }
        std::string name() const;
        // "last-state", "qdiff-second", "qdiff-worst", "frequency"
        static std::optional<ImportanceMethod> parse(std::string_view text, std::uint64_t seed = 0);

        bool operator==(const ImportanceMethod&) const = default;
    };

    inline constexpr int kUnlimitedOverlap = std::numeric_limits<int>::max();

    struct SummaryEntry
    {
        std::size_t pair_index = 0;  // index into the scored pair list
        CFPair pair;
        std::optional<double> score;  // empty for frequency sampling
    };

    struct Summary
    {
        std::vector<SummaryEntry> entries;
        ImportanceMethod method;
        int n = 4;
        int overlap_limit = 5;
        std::string agent_id;
        std::string manifest_hash;
    };

    // |V(fact end) - V(foil end)|, terminal endpoints valued 0.
    double lastStateImportance(const AgentModel& model, const HighwayEnv& env, const CFPair& pair);
    double qDiffImportance(const DecomposedQ& q, QDiffVariant variant);
    double scorePair(const AgentModel& model, const HighwayEnv& env, const CFPair& pair,
                     const ImportanceMethod& method);

    // Indices of a uniform sample of min(n, |pairs|) distinct pairs, ascending.
    std::vector<std::size_t> frequencySample(std::size_t count, int n, std::uint64_t seed);
    std::vector<CFPair> frequencySelect(std::span<const CFPair> pairs, int n, std::uint64_t seed);

    // Shared fact time indices [i, i+k] of two pairs from the same trace.
    int overlapCount(const CFPair& a, const CFPair& b) noexcept;

    Summary topImpTraj(const AgentModel& model, const HighwayEnv& env, std::span<const CFPair> pairs,
                       const ImportanceMethod& method, int n, int overlap_limit);

    // Foil reaches a state identical to the fact state at the same offset.
    bool foilRejoins(const CFPair& pair) noexcept;
    double rejoinFraction(std::span<const CFPair> pairs) noexcept;
    double rejoinFraction(const Summary& summary) noexcept;

    // Throws ConsistencyError describing the first violated summary invariant.
    void checkSummaryInvariants(const Summary& summary);
}
