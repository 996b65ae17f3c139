#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <map>
#include <numeric>

namespace coviz
{
    /// Per-component action values: q[c][a].
    template <std::size_t C, std::size_t A>
    using QMatrix = std::array<std::array<double, A>, C>;

    /// Total Q per action, summed over components in ascending component order.
    /// Every caller goes through this so the summation order is canonical.
    template <std::size_t C, std::size_t A>
    std::array<double, A> actionTotals(const QMatrix<C, A>& q) noexcept
    {
        std::array<double, A> totals{};
        for (std::size_t a = 0; a < A; ++a)
        {
            double sum = 0.0;
            for (std::size_t c = 0; c < C; ++c)
            {
                sum += q[c][a];
            }
            totals[a] = sum;
        }
        return totals;
    }

    // Lowest index wins ties.
    template <std::size_t A>
    std::size_t argmaxIndex(const std::array<double, A>& totals) noexcept
    {
        std::size_t best = 0;
        for (std::size_t a = 1; a < A; ++a)
        {
            if (totals[a] > totals[best])
                best = a;
        }
        return best;
    }

    // Descending by total, ties by ascending index.
    template <std::size_t A>
    std::array<std::size_t, A> rankIndices(const std::array<double, A>& totals)
    {
        std::array<std::size_t, A> order{};
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t lhs, std::size_t rhs) { return totals[lhs] > totals[rhs]; });
        return order;
    }

    /// Tabular hybrid-reward learner: one Q table per reward component over a
    /// shared discrete state key. All components bootstrap on the action that is
    /// greedy for the component SUM at the next state, so the summed table
    /// follows ordinary Q-learning on the summed reward.
    template <std::size_t C, std::size_t A, class Key = std::uint32_t>
    class DecomposedTable
    {
    public:
        using Matrix = QMatrix<C, A>;
        using Rewards = std::array<double, C>;

        Matrix values(const Key& state) const
        {
            auto it = table_.find(state);
            return it == table_.end() ? Matrix{} : it->second;
        }

        bool contains(const Key& state) const { return table_.count(state) != 0; }

        std::size_t greedy(const Key& state) const { return argmaxIndex(actionTotals(values(state))); }

        void update(const Key& state, std::size_t action, const Rewards& rewards, const Key& next, bool terminal,
                    double alpha, double gamma)
        {
            std::array<std::size_t, C> bootstrap{};
            bootstrap.fill(greedy(next));
            updateWithBootstrap(state, action, rewards, next, terminal, bootstrap, alpha, gamma);
        }

        // Exposed so tests can contrast the shared-argmax rule with per-component
        // bootstrapping; update() always passes one action for every component.
        void updateWithBootstrap(const Key& state, std::size_t action, const Rewards& rewards, const Key& next,
                                 bool terminal, const std::array<std::size_t, C>& bootstrap, double alpha,
                                 double gamma)
        {
            const Matrix nextValues = values(next);
            Matrix entry = values(state);
            bool changed = false;
            for (std::size_t c = 0; c < C; ++c)
            {
                const double future = terminal ? 0.0 : gamma * nextValues[c][bootstrap[c]];
                const double target = rewards[c] + future;
                const double updated = entry[c][action] + alpha * (target - entry[c][action]);
                changed = changed || updated != entry[c][action];
                entry[c][action] = updated;
            }
            // Unseen states stay implicit zeros until something non-zero is learned.
            if (changed || table_.count(state) != 0)
                table_[state] = entry;
        }

        void set(const Key& state, const Matrix& values) { table_[state] = values; }

        const std::map<Key, Matrix>& entries() const noexcept { return table_; }
        std::size_t size() const noexcept { return table_.size(); }

        bool operator==(const DecomposedTable&) const = default;

    private:
        std::map<Key, Matrix> table_;
    };
}
