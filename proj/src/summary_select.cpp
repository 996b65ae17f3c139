#include "coviz/summary_select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coviz
{
    std::string ImportanceMethod::name() const
    {
        switch (kind)
        {
        case Kind::LastState:
            return "last-state";
        case Kind::QDiffSecondBest:
            return "qdiff-second";
        case Kind::QDiffWorst:
            return "qdiff-worst";
        case Kind::Frequency:
            return "frequency";
        }
        return "last-state";
    }

    std::optional<ImportanceMethod> ImportanceMethod::parse(std::string_view text, std::uint64_t seed)
    {
        if (text == "last-state" || text == "last_state" || text == "laststate")
            return lastState();
        if (text == "qdiff-second" || text == "qdiff-second-best" || text == "qdiff_second_best")
            return qdiffSecondBest();
        if (text == "qdiff-worst" || text == "qdiff_worst")
            return qdiffWorst();
        if (text == "frequency")
            return frequency(seed);
        return std::nullopt;
    }

    double lastStateImportance(const AgentModel& model, const HighwayEnv& env, const CFPair& pair)
    {
        if (pair.fact.empty() || pair.foil.empty())
            throw ConsistencyError("pair " + pair.trace_id + "@" + std::to_string(pair.origin_index) +
                                   " has an empty trajectory");
        const double factValue = stateValueAt(model, env, pair.fact.back());
        const double foilValue = stateValueAt(model, env, pair.foil.back());
        return std::abs(factValue - foilValue);
    }

    double qDiffImportance(const DecomposedQ& q, QDiffVariant variant)
    {
        const ActionTotals totals = totalQ(q);
        const auto order = rankIndices(totals);
        const std::size_t other = variant == QDiffVariant::SecondBest ? order[1] : order[kNumActions - 1];
        return totals[order[0]] - totals[other];
    }

    double scorePair(const AgentModel& model, const HighwayEnv& env, const CFPair& pair,
                     const ImportanceMethod& method)
    {
        switch (method.kind)
        {
        case ImportanceMethod::Kind::LastState:
            return lastStateImportance(model, env, pair);
        case ImportanceMethod::Kind::QDiffSecondBest:
            return qDiffImportance(pair.origin_q, QDiffVariant::SecondBest);
        case ImportanceMethod::Kind::QDiffWorst:
            return qDiffImportance(pair.origin_q, QDiffVariant::Worst);
        case ImportanceMethod::Kind::Frequency:
            break;
        }
        throw UsageError("frequency sampling has no per-pair score");
    }

    std::vector<std::size_t> frequencySample(std::size_t count, int n, std::uint64_t seed)
    {
        std::vector<std::size_t> indices(count);
        std::iota(indices.begin(), indices.end(), std::size_t{0});
        if (n < 0 || static_cast<std::size_t>(n) >= count)
            return indices;

        // Partial Fisher-Yates on the portable stream.
        SimRng rng(seed);
        const std::size_t take = static_cast<std::size_t>(n);
        for (std::size_t i = 0; i < take; ++i)
        {
            const std::size_t j = i + static_cast<std::size_t>(rng.index(static_cast<int>(count - i)));
            std::swap(indices[i], indices[j]);
        }
        indices.resize(take);
        std::sort(indices.begin(), indices.end());
        return indices;
    }

    std::vector<CFPair> frequencySelect(std::span<const CFPair> pairs, int n, std::uint64_t seed)
    {
        std::vector<CFPair> out;
        for (std::size_t i : frequencySample(pairs.size(), n, seed))
        {
            out.push_back(pairs[i]);
        }
        return out;
    }

    int overlapCount(const CFPair& a, const CFPair& b) noexcept
    {
        if (a.trace_id != b.trace_id)
            return 0;
        const int lo = std::max(a.origin_index, b.origin_index);
        const int hi = std::min(a.origin_index + a.k(), b.origin_index + b.k());
        return std::max(0, hi - lo + 1);
    }

    Summary topImpTraj(const AgentModel& model, const HighwayEnv& env, std::span<const CFPair> pairs,
                       const ImportanceMethod& method, int n, int overlapLimit)
    {
        if (n < 1)
            throw ConfigError("n must be >= 1");
        if (overlapLimit < 0)
            throw ConfigError("overlap must be >= 0");

        Summary summary;
        summary.method = method;
        summary.n = n;
        summary.overlap_limit = overlapLimit;
        summary.agent_id = model.id();

        if (!method.scoreBased())
        {
            for (std::size_t i : frequencySample(pairs.size(), n, method.seed))
            {
                summary.entries.push_back(SummaryEntry{i, pairs[i], std::nullopt});
            }
            return summary;
        }

        std::vector<double> scores(pairs.size());
        for (std::size_t i = 0; i < pairs.size(); ++i)
        {
            scores[i] = scorePair(model, env, pairs[i], method);
        }
        std::vector<std::size_t> order(pairs.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t lhs, std::size_t rhs) { return scores[lhs] > scores[rhs]; });

        for (std::size_t idx : order)
        {
            if (summary.entries.size() >= static_cast<std::size_t>(n))
                break;
            const CFPair& candidate = pairs[idx];
            if (candidate.degenerate)
                continue;
            const bool conflicts = std::any_of(summary.entries.begin(), summary.entries.end(), [&](const auto& e) {
                return overlapCount(e.pair, candidate) > overlapLimit;
            });
            if (conflicts)
                continue;
            summary.entries.push_back(SummaryEntry{idx, candidate, scores[idx]});
        }
        return summary;
    }

    bool foilRejoins(const CFPair& pair) noexcept
    {
        const std::size_t n = std::min(pair.fact.size(), pair.foil.size());
        for (std::size_t j = 0; j < n; ++j)
        {
            if (pair.foil[j] == pair.fact[j])
                return true;
        }
        return false;
    }

    double rejoinFraction(std::span<const CFPair> pairs) noexcept
    {
        if (pairs.empty())
            return 0.0;
        const auto rejoined = std::count_if(pairs.begin(), pairs.end(), foilRejoins);
        return static_cast<double>(rejoined) / static_cast<double>(pairs.size());
    }

    double rejoinFraction(const Summary& summary) noexcept
    {
        if (summary.entries.empty())
            return 0.0;
        std::size_t rejoined = 0;
        for (const auto& e : summary.entries)
        {
            rejoined += foilRejoins(e.pair) ? 1 : 0;
        }
        return static_cast<double>(rejoined) / static_cast<double>(summary.entries.size());
    }

    void checkSummaryInvariants(const Summary& summary)
    {
        if (summary.entries.size() > static_cast<std::size_t>(std::max(summary.n, 0)))
            throw ConsistencyError("summary holds more than n entries");
        if (!summary.method.scoreBased())
            return;
        for (std::size_t i = 0; i < summary.entries.size(); ++i)
        {
            const auto& entry = summary.entries[i];
            if (!entry.score)
                throw ConsistencyError("score-based summary entry without a score");
            if (entry.pair.degenerate)
                throw ConsistencyError("degenerate pair selected into a score-based summary");
            if (i > 0 && *entry.score > *summary.entries[i - 1].score)
                throw ConsistencyError("summary scores are not non-increasing");
            for (std::size_t j = 0; j < i; ++j)
            {
                if (overlapCount(summary.entries[j].pair, entry.pair) > summary.overlap_limit)
                    throw ConsistencyError("summary entries " + std::to_string(j) + " and " + std::to_string(i) +
                                           " exceed the overlap limit");
            }
        }
    }
}
