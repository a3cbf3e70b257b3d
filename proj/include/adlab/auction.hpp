#pragma once

// Generalized second-price auction with relevance-weighted ranking:
// allocation, incentive checks, minimum symmetric equilibrium bids, and the
// revenue / efficiency functionals built on them.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "core.hpp"

namespace adlab {

/// Outcome of running the auction on a ranked profile.
struct Allocation {
    struct Slot {
        std::size_t position = 0;  // 1-based rank
        BidderId id = 0;
        double gamma = 0.0;
        double price_score = 0.0;       // e_i * p_i, the next ranked score (or reserve)
        double price_per_click = 0.0;   // p_i = price_score / e_i
        double payment_per_impression = 0.0;  // gamma * price_score
    };

    std::vector<Slot> slots;            // ranks 1..min(K, N)
    std::vector<BidderId> unslotted;    // ranked below the last position
    double reserve = 0.0;

    const Slot* slot_of(BidderId id) const {
        for (const auto& s : slots)
            if (s.id == id) return &s;
        return nullptr;
    }
};

/// Expected payoff of a bidder in a slot with CTR gamma at per-click price p:
/// gamma * e_i * (v_i - p).
inline double payoff(const Bidder& b, double gamma, double price_per_click) {
    return gamma * b.relevance * (b.value - price_per_click);
}

/// Same payoff expressed through the price score e_i * p_i, which is how GSP
/// prices arise (the next ranked score): gamma * (s_i - price_score).
inline double payoff_from_score(double gamma, double own_score, double price_score) {
    return gamma * (own_score - price_score);
}

/// Runs GSP: rank i pays the score of rank i+1 per its own relevance; the
/// bottom ranked bidder pays the reserve score when nobody y ranks below.
/// Throws if the reserve would price a bidder above its own bid.
inline Allocation allocate(const SlotCurve& curve, const std::vector<Bidder>& bidders,
                           const BidProfile& profile, double reserve = 0.0) {
    validate_bidders(bidders);
    if (profile.size() != bidders.size())
        throw invalid_input("profile must cover all bidders");
    if (!(reserve >= 0.0))
        throw invalid_input("reserve must be >= 0");

    Allocation out;
    out.reserve = reserve;
    const std::size_t n = profile.size();
    const std::size_t filled = std::min(curve.slots(), n);
    for (std::size_t i = 1; i <= filled; ++i) {
        const auto& e = profile.at_rank(i);
        const Bidder& owner = bidder_by_id(bidders, e.id);
        double price_score = (i < n) ? profile.score_at(i + 1) : reserve;
        if (i == n && reserve > e.score + kDefaultTol)
            throw invalid_input("reserve exceeds the last slotted bidder's score");
        Allocation::Slot s;
        s.position = i;
        s.id = e.id;
        s.gamma = curve.gamma(i);
        s.price_score = price_score;
        s.price_per_click = price_score / owner.relevance;
        s.payment_per_impression = s.gamma * price_score;
        out.slots.push_back(s);
    }
    for (std::size_t i = filled + 1; i <= n; ++i) out.unslotted.push_back(profile.at_rank(i).id);
    return out;
}

/// One profitable deviation found by verify_sne. target_position 0 means
/// dropping out of the auction.
struct SneViolation {
    std::size_t rank = 0;
    BidderId id = 0;
    std::size_t target_position = 0;
    double current_payoff = 0.0;
    double deviation_payoff = 0.0;
    double gain = 0.0;
};

struct SneReport {
    bool is_sne = true;
    std::vector<SneViolation> violations;
};

namespace detail {

// Per-impression payoff of rank i in a ranked profile (0 past the curve).
inline double rank_payoff(const SlotCurve& curve, const std::vector<Bidder>& bidders,
                          const BidProfile& profile, std::size_t i, double reserve) {
    const std::size_t n = profile.size();
    double gamma = curve.gamma(i);
    if (gamma == 0.0) return 0.0;
    double price = (i < n) ? profile.score_at(i + 1) : reserve;
    const auto& e = profile.at_rank(i);
    return payoff_from_score(gamma, bidder_by_id(bidders, e.id).score(), price);
}

// Payoff of the rank-i bidder (score s_i) after moving to position t. Moving
// up pays the occupant's bid score; moving down pays the score that lands
// below. t == 0 models dropping out.
inline double deviation_payoff(const SlotCurve& curve, const BidProfile& profile, double s_i,
                               std::size_t i, std::size_t t, double reserve) {
    if (t == 0) return 0.0;
    double gamma_t = curve.gamma(t);
    if (t < i) return payoff_from_score(gamma_t, s_i, profile.score_at(t));
    double price = (t < profile.size()) ? profile.score_at(t + 1) : reserve;
    return payoff_from_score(gamma_t, s_i, price);
}

}  // namespace detail

/// Checks the symmetric-equilibrium property of a ranked profile: no bidder
/// gains by taking any other position. A move up to position t < i pays the
/// occupant's bid score r_t (it must be outbid); a move down to t > i pays
/// the score that ends up below, r_{t+1} (reserve at the bottom, and for
/// empty positions). Dropping out (payoff 0) is included as target 0.
/// `restrict_to` limits which bidders' deviations are examined; prices and
/// positions of the others still enter as targets.
inline SneReport verify_sne(const SlotCurve& curve, const std::vector<Bidder>& bidders,
                            const BidProfile& profile, double tol = kDefaultTol,
                            double reserve = 0.0,
                            const std::optional<std::set<BidderId>>& restrict_to = std::nullopt) {
    validate_bidders(bidders);
    if (profile.size() != bidders.size())
        throw invalid_input("profile must cover all bidders");

    SneReport report;
    const std::size_t n = profile.size();
    const std::size_t K = curve.slots();
    const std::size_t max_target = std::max(n, K);

    for (std::size_t i = 1; i <= n; ++i) {
        const auto& e = profile.at_rank(i);
        if (restrict_to && restrict_to->find(e.id) == restrict_to->end()) continue;
        const double s_i = bidder_by_id(bidders, e.id).score();
        const double u_i = detail::rank_payoff(curve, bidders, profile, i, reserve);

        auto record = [&](std::size_t t, double dev) {
            if (dev > u_i + tol)
                report.violations.push_back({i, e.id, t, u_i, dev, dev - u_i});
        };

        record(0, 0.0);  // drop out
        for (std::size_t t = 1; t <= max_target; ++t) {
            if (t == i) continue;
            record(t, detail::deviation_payoff(curve, profile, s_i, i, t, reserve));
        }
    }
    report.is_sne = report.violations.empty();
    return report;
}

/// One row of the adjacent-position equilibrium table: a bidder's payoff in
/// place against moving one position up at that position's current price
/// (gamma_{j-1} * (s_j - r_j)) or one position down (gamma_{j+1} *
/// (s_j - r_{j+2})).
struct AdjacentRow {
    std::size_t rank = 0;
    BidderId id = 0;
    double payoff = 0.0;
    std::optional<double> payoff_up;
    std::optional<double> payoff_down;
    bool satisfied = true;
};

inline std::vector<AdjacentRow> sne_adjacent_report(const SlotCurve& curve,
                                                    const std::vector<Bidder>& bidders,
                                                    const BidProfile& profile,
                                                    double tol = kDefaultTol,
                                                    double reserve = 0.0) {
    validate_bidders(bidders);
    if (profile.size() != bidders.size())
        throw invalid_input("profile must cover all bidders");

    std::vector<AdjacentRow> rows;
    const std::size_t n = profile.size();
    for (std::size_t j = 1; j <= n; ++j) {
        const auto& e = profile.at_rank(j);
        const double s_j = bidder_by_id(bidders, e.id).score();
        AdjacentRow row;
        row.rank = j;
        row.id = e.id;
        row.payoff = detail::rank_payoff(curve, bidders, profile, j, reserve);
        if (j >= 2) row.payoff_up = payoff_from_score(curve.gamma(j - 1), s_j, profile.score_at(j));
        {
            double price = (j + 1 < n) ? profile.score_at(j + 2) : reserve;
            row.payoff_down = payoff_from_score(curve.gamma(j + 1), s_j, price);
        }
        row.satisfied = (!row.payoff_up || *row.payoff_up <= row.payoff + tol) &&
                        (!row.payoff_down || *row.payoff_down <= row.payoff + tol);
        rows.push_back(row);
    }
    return rows;
}

namespace detail {

// Zero-padded score lookup, 1-based.
inline double padded(const std::vector<double>& s, std::size_t j) {
    return (j >= 1 && j <= s.size()) ? s[j - 1] : 0.0;
}

inline void require_sorted_scores(const std::vector<double>& s) {
    for (std::size_t i = 1; i < s.size(); ++i)
        if (s[i] > s[i - 1] + kDefaultTol)
            throw invalid_input("scores must be given in decreasing order");
}

}  // namespace detail

/// Bid scores of the bidder-optimal (minimum) symmetric equilibrium:
/// gamma_i * r_{i+1} = sum_{j >= i} (gamma_j - gamma_{j+1}) * s_{j+1} for
/// each position i, evaluated over the given curve with scores zero-padded
/// past the last bidder. Returns r_1..r_N; the top bid is unconstrained and
/// set to r_2 + 1, bidders ranked below position K+1 bid their own score.
inline std::vector<double> min_sne_scores(const SlotCurve& curve, const std::vector<double>& scores) {
    const std::size_t K = curve.slots();
    const std::size_t n = scores.size();
    if (K < 1) throw invalid_input("min-SNE bids need at least one slot");
    if (n < 2) throw invalid_input("min-SNE bids need at least two bidders");
    detail::require_sorted_scores(scores);

    std::vector<double> r(n + 1, 0.0);  // r[i] = score of rank i, 1-based
    double tail = 0.0;                  // sum_{j >= i} (gamma_j - gamma_{j+1}) s_{j+1}
    std::size_t top = std::min(K, n - 1);
    for (std::size_t i = K; i >= 1; --i) {
        tail += (curve.gamma(i) - curve.gamma(i + 1)) * detail::padded(scores, i + 1);
        if (i <= top) r[i + 1] = tail / curve.gamma(i);
    }
    for (std::size_t j = K + 2; j <= n; ++j) r[j] = detail::padded(scores, j);
    r[1] = r[2] + 1.0;
    return std::vector<double>(r.begin() + 1, r.end());
}

/// Minimum-SNE bid profile for bidders already in allocation order.
inline BidProfile min_sne_bids(const SlotCurve& curve, const std::vector<Bidder>& bidders_in_order) {
    validate_bidders(bidders_in_order);
    auto scores = scores_of(bidders_in_order);
    auto r = min_sne_scores(curve, scores);
    std::vector<BidProfile::ScoredBid> scored;
    for (std::size_t i = 0; i < bidders_in_order.size(); ++i)
        scored.push_back({bidders_in_order[i].id, r[i], static_cast<int>(i + 1)});
    return BidProfile::from_scores(bidders_in_order, scored);
}

/// Expected revenue per impression at the minimum SNE:
/// sum_{j=1..K} (gamma_j - gamma_{j+1}) * j * s_{j+1}, scores zero-padded.
/// Works over any decreasing CTR list, which lets forked curves reuse it.
inline double min_sne_revenue_over(const std::vector<double>& ctrs, const std::vector<double>& scores) {
    detail::require_sorted_scores(scores);
    double total = 0.0;
    for (std::size_t j = 1; j <= ctrs.size(); ++j) {
        double g = ctrs[j - 1];
        double g_next = (j < ctrs.size()) ? ctrs[j] : 0.0;
        total += (g - g_next) * static_cast<double>(j) * detail::padded(scores, j + 1);
    }
    return total;
}

inline double revenue_min_sne(const SlotCurve& curve, const std::vector<double>& scores) {
    return min_sne_revenue_over(curve.values(), scores);
}

inline double revenue_min_sne(const SlotCurve& curve, const std::vector<Bidder>& bidders_in_order) {
    return revenue_min_sne(curve, scores_of(bidders_in_order));
}

/// Allocative efficiency sum_{j} gamma_j * s_j with bidders in score order.
inline double efficiency_over(const std::vector<double>& ctrs, const std::vector<double>& scores) {
    detail::require_sorted_scores(scores);
    double total = 0.0;
    for (std::size_t j = 1; j <= ctrs.size(); ++j) total += ctrs[j - 1] * detail::padded(scores, j);
    return total;
}

inline double efficiency(const SlotCurve& curve, const std::vector<double>& scores) {
    return efficiency_over(curve.values(), scores);
}

inline double efficiency(const SlotCurve& curve, const std::vector<Bidder>& bidders_in_order) {
    return efficiency(curve, scores_of(bidders_in_order));
}

/// Grid search result for one bidder's best deviating bid.
struct BestResponse {
    BidderId id = 0;
    double current_payoff = 0.0;
    double best_payoff = 0.0;
    double best_bid = 0.0;
    double gain = 0.0;  // best_payoff - current_payoff
};

struct BestResponseReport {
    std::vector<BestResponse> responses;
    double max_gain = 0.0;
    bool grid_warning = false;  // two distinct profile scores within one grid step
};

/// Exhaustive deviation search on a bid grid. Each candidate bid is scored
/// by re-ranking the deviator against the other bidders' standing scores,
/// which reproduces exactly what re-running allocate would pay them. The
/// grid spans [0, max(max bid, max score / e_i) + grid_step] per bidder so
/// low-relevance bidders can still reach the top position.
inline BestResponseReport best_response_oracle(const SlotCurve& curve,
                                               const std::vector<Bidder>& bidders,
                                               const BidProfile& profile, double grid_step,
                                               double reserve = 0.0) {
    validate_bidders(bidders);
    if (profile.size() != bidders.size())
        throw invalid_input("profile must cover all bidders");
    if (!(grid_step > 0.0)) throw invalid_input("grid_step must be > 0");

    BestResponseReport report;
    const std::size_t n = profile.size();

    double max_bid = 0.0, max_score = 0.0;
    for (const auto& e : profile.entries()) {
        max_bid = std::max(max_bid, e.bid);
        max_score = std::max(max_score, e.score);
    }
    {
        std::vector<double> scores;
        for (const auto& e : profile.entries()) scores.push_back(e.score);
        std::sort(scores.begin(), scores.end());
        for (std::size_t i = 1; i < scores.size(); ++i)
            if (scores[i] != scores[i - 1] && scores[i] - scores[i - 1] < grid_step)
                report.grid_warning = true;
    }

    for (std::size_t i = 1; i <= n; ++i) {
        const auto& mine = profile.at_rank(i);
        const Bidder& owner = bidder_by_id(bidders, mine.id);
        const double s_i = owner.score();

        // Other bidders' (score, tie_rank), ranked.
        std::vector<std::pair<double, int>> others;
        for (std::size_t j = 1; j <= n; ++j) {
            if (j == i) continue;
            const auto& e = profile.at_rank(j);
            others.emplace_back(e.score, e.tie_rank);
        }

        auto payoff_at = [&](double q) {
            // Rank after deviating to score q with this bidder's tie_rank.
            auto beats = [&](const std::pair<double, int>& o) {
                if (o.first != q) return o.first > q;
                return o.second < mine.tie_rank;
            };
            std::size_t above = 0;
            while (above < others.size() && beats(others[above])) ++above;
            std::size_t rank = above + 1;
            double gamma = curve.gamma(rank);
            if (gamma == 0.0) return 0.0;
            double price = (above < others.size()) ? others[above].first : reserve;
            return payoff_from_score(gamma, s_i, price);
        };

        BestResponse r;
        r.id = mine.id;
        r.current_payoff = detail::rank_payoff(curve, bidders, profile, i, reserve);
        r.best_payoff = payoff_at(0.0);
        r.best_bid = 0.0;
        double hi = std::max(max_bid, max_score / owner.relevance) + grid_step;
        for (double b = grid_step; b <= hi; b += grid_step) {
            double u = payoff_at(owner.relevance * b);
            if (u > r.best_payoff) {
                r.best_payoff = u;
                r.best_bid = b;
            }
        }
        r.gain = r.best_payoff - r.current_payoff;
        report.max_gain = std::max(report.max_gain, r.gain);
        report.responses.push_back(r);
    }
    return report;
}

}  // namespace adlab
