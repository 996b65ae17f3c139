#pragma once

// Small deterministic MDP with two actions and two reward components, plus
// exact dynamic-programming solutions used as oracles for the decomposed learner.

#include "coviz/hra_learner.hpp"

#include <array>
#include <cmath>
#include <cstdint>

namespace coviz::toy
{
    inline constexpr std::size_t kStates = 6;  // state 5 is terminal
    inline constexpr std::size_t kTerminal = 5;
    inline constexpr std::size_t kActions = 2;
    inline constexpr std::size_t kComponents = 2;

    using Table = DecomposedTable<kComponents, kActions, std::uint32_t>;
    using Values = std::array<std::array<std::array<double, kActions>, kComponents>, kStates>;  // [s][c][a]
    using Policy = std::array<std::size_t, kStates>;

    struct Transition
    {
        std::size_t next;
        std::array<double, kComponents> reward;
    };

    inline const Transition& transition(std::size_t s, std::size_t a)
    {
        static const std::array<std::array<Transition, kActions>, kTerminal> table{{
            {{{1, {1.0, 0.0}}, {2, {0.0, 2.0}}}},
            {{{3, {0.0, 1.0}}, {0, {1.0, 1.0}}}},
            {{{4, {2.0, 0.0}}, {5, {0.0, 0.0}}}},
            {{{5, {5.0, 0.0}}, {1, {0.0, 0.5}}}},
            {{{0, {0.0, 0.0}}, {5, {1.0, 3.0}}}},
        }};
        return table[s][a];
    }

    // Optimal Q of the summed reward by value iteration.
    inline std::array<std::array<double, kActions>, kStates> valueIteration(double gamma, double tol = 1e-13)
    {
        std::array<std::array<double, kActions>, kStates> q{};
        for (int iter = 0; iter < 100000; ++iter)
        {
            double delta = 0.0;
            for (std::size_t s = 0; s < kTerminal; ++s)
            {
                for (std::size_t a = 0; a < kActions; ++a)
                {
                    const Transition& t = transition(s, a);
                    const double future = t.next == kTerminal ? 0.0 : std::max(q[t.next][0], q[t.next][1]);
                    const double value = t.reward[0] + t.reward[1] + gamma * future;
                    delta = std::max(delta, std::abs(value - q[s][a]));
                    q[s][a] = value;
                }
            }
            if (delta < tol)
                break;
        }
        return q;
    }

    inline Policy greedyPolicy(const std::array<std::array<double, kActions>, kStates>& q)
    {
        Policy pi{};
        for (std::size_t s = 0; s < kTerminal; ++s)
        {
            pi[s] = q[s][1] > q[s][0] ? 1 : 0;
        }
        return pi;
    }

    // Per-component Q of a fixed policy.
    inline Values evaluatePolicy(const Policy& pi, double gamma, double tol = 1e-13)
    {
        Values v{};
        for (int iter = 0; iter < 100000; ++iter)
        {
            double delta = 0.0;
            for (std::size_t s = 0; s < kTerminal; ++s)
            {
                for (std::size_t c = 0; c < kComponents; ++c)
                {
                    for (std::size_t a = 0; a < kActions; ++a)
                    {
                        const Transition& t = transition(s, a);
                        const double future = t.next == kTerminal ? 0.0 : v[t.next][c][pi[t.next]];
                        const double value = t.reward[c] + gamma * future;
                        delta = std::max(delta, std::abs(value - v[s][c][a]));
                        v[s][c][a] = value;
                    }
                }
            }
            if (delta < tol)
                break;
        }
        return v;
    }

    // Tabular decomposed Q-learning: repeated sweeps over every (state, action)
    // of the deterministic model, each applying one learner update.
    inline Table trainSweeps(double alpha, double gamma, int sweeps)
    {
        Table table;
        for (int sweep = 0; sweep < sweeps; ++sweep)
        {
            for (std::uint32_t s = 0; s < kTerminal; ++s)
            {
                for (std::size_t a = 0; a < kActions; ++a)
                {
                    const Transition& t = transition(s, a);
                    table.update(s, a, t.reward, static_cast<std::uint32_t>(t.next), t.next == kTerminal, alpha,
                                 gamma);
                }
            }
        }
        return table;
    }
}
