#pragma once

// A for-profit bid mediator: a coalition of bidders (M-bidders) hands their
// keyword bidding to a mediator who lowers their bids as far as the
// non-mediated bidders' (I-bidders') incentives allow, keeps a share alpha
// of the per-click savings, and rebates the rest equally to the coalition.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "auction.hpp"
#include "core.hpp"

namespace adlab {

enum class PlanKind { top, interior, nonsym, slide };

inline const char* to_string(PlanKind k) {
    switch (k) {
        case PlanKind::top: return "top";
        case PlanKind::interior: return "interior";
        case PlanKind::nonsym: return "nonsym";
        case PlanKind::slide: return "slide";
    }
    return "?";
}

/// A mediated keyword market: an equilibrium bid profile plus the coalition.
/// Construct through make_scenario, which checks the equilibrium property.
struct MediatorScenario {
    SlotCurve curve;
    std::vector<Bidder> bidders;
    BidProfile base;
    std::set<BidderId> m_ids;
    double share = 0.5;  // mediator's cut alpha, in (0, 1)
    double reserve = 0.0;

    std::set<BidderId> i_ids() const {
        std::set<BidderId> out;
        for (const auto& b : bidders)
            if (m_ids.find(b.id) == m_ids.end()) out.insert(b.id);
        return out;
    }
};

inline MediatorScenario make_scenario(SlotCurve curve, std::vector<Bidder> bidders, BidProfile base,
                                      std::set<BidderId> m_ids, double share, double reserve = 0.0,
                                      double tol = kDefaultTol) {
    validate_bidders(bidders);
    if (!(share > 0.0) || !(share < 1.0))
        throw invalid_input("mediator share must lie strictly inside (0, 1)");
    if (m_ids.empty()) throw invalid_input("the coalition must contain at least one bidder");
    for (BidderId id : m_ids) bidder_by_id(bidders, id);  // throws on unknown ids
    auto sne = verify_sne(curve, bidders, base, tol, reserve);
    if (!sne.is_sne) {
        const auto& v = sne.violations.front();
        throw invalid_input("base profile is not an equilibrium: rank " + std::to_string(v.rank) +
                            " gains " + std::to_string(v.gain) + " at position " +
                            std::to_string(v.target_position));
    }
    MediatorScenario s;
    s.curve = std::move(curve);
    s.bidders = std::move(bidders);
    s.base = std::move(base);
    s.m_ids = std::move(m_ids);
    s.share = share;
    s.reserve = reserve;
    return s;
}

/// The level the coalition's bids can be lowered to before some I-bidder
/// would rather take a coalition position: the max over I-bidders of the
/// score that leaves them indifferent. thresholds lists each I-bidder's term.
struct RStar {
    double value = 0.0;
    struct Threshold {
        std::size_t rank = 0;
        BidderId id = 0;
        double x = 0.0;
    };
    std::vector<Threshold> thresholds;
};

/// A priced coalition plan: the modified profile plus the savings split.
struct MediatorPlan {
    PlanKind kind = PlanKind::top;
    double share = 0.0;
    std::set<BidderId> m_ids;
    double r_star = 0.0;     // binding outsider threshold (score units)
    double flat_score = 0.0; // score the flattened coalition block bids
    std::size_t flat_lo = 0; // flattened base ranks [flat_lo .. flat_hi]
    std::size_t flat_hi = 0;
    BidProfile modified;
    bool keeps_positions = true;
    std::vector<std::pair<BidderId, std::pair<std::size_t, std::size_t>>> moved;  // id, old -> new
    double payoff_per_share = 0.0;  // U_M / alpha, per impression
    std::map<BidderId, double> base_price;        // per click
    std::map<BidderId, double> new_price;         // per click
    std::map<BidderId, double> saving_per_click;  // p_i - p~_i
    bool i_verified = false;
};

/// plan_* result: either a plan or the reason no profitable one exists.
/// r_star is filled either way, so callers can see the binding threshold
/// even when it leaves nothing to flatten.
struct PlanOutcome {
    std::optional<MediatorPlan> plan;
    std::string no_improvement;
    double r_star = 0.0;

    bool improved() const { return plan.has_value(); }
    const MediatorPlan& operator*() const { return *plan; }
    const MediatorPlan* operator->() const { return &*plan; }
};

namespace detail {

inline void require_m_block(const MediatorScenario& s, std::size_t lo, std::size_t hi) {
    if (hi > s.base.size()) throw invalid_input("coalition block exceeds the profile");
    std::set<BidderId> block;
    for (std::size_t i = lo; i <= hi; ++i) block.insert(s.base.at_rank(i).id);
    if (block != s.m_ids)
        throw invalid_input("coalition must occupy base ranks " + std::to_string(lo) + ".." +
                            std::to_string(hi) + " exactly");
}

inline double next_score(const MediatorScenario& s, std::size_t j) {
    return (j < s.base.size()) ? s.base.score_at(j + 1) : s.reserve;
}

// Indifference threshold of the I-bidder at base rank j against entering a
// flattened block whose top position has CTR gamma_t:
// (1 - gamma_j / gamma_t) s_j + (gamma_j / gamma_t) r_{j+1}.
inline double entry_threshold(const MediatorScenario& s, std::size_t j, double gamma_t) {
    double gamma_j = s.curve.gamma(j);
    double s_j = bidder_by_id(s.bidders, s.base.at_rank(j).id).score();
    return (1.0 - gamma_j / gamma_t) * s_j + (gamma_j / gamma_t) * next_score(s, j);
}

// Modified profile with base ranks [lo..hi] re-scored to flat; tie_rank is
// the base rank, so equal scores keep the base order.
inline BidProfile flattened_profile(const MediatorScenario& s, std::size_t lo, std::size_t hi,
                                    double flat) {
    std::vector<BidProfile::ScoredBid> scored;
    for (std::size_t i = 1; i <= s.base.size(); ++i) {
        const auto& e = s.base.at_rank(i);
        double score = (i >= lo && i <= hi) ? flat : e.score;
        scored.push_back({e.id, score, static_cast<int>(i)});
    }
    return BidProfile::from_scores(s.bidders, scored);
}

inline void fill_prices(const MediatorScenario& s, MediatorPlan& plan) {
    Allocation before = allocate(s.curve, s.bidders, s.base, s.reserve);
    Allocation after = allocate(s.curve, s.bidders, plan.modified, s.reserve);
    for (BidderId id : plan.m_ids) {
        const auto* b = before.slot_of(id);
        const auto* a = after.slot_of(id);
        double pb = b ? b->price_per_click : 0.0;
        double pa = a ? a->price_per_click : 0.0;
        plan.base_price[id] = pb;
        plan.new_price[id] = pa;
        plan.saving_per_click[id] = pb - pa;
    }
}

inline void fill_movement(const MediatorScenario& s, MediatorPlan& plan) {
    plan.keeps_positions = true;
    plan.moved.clear();
    for (std::size_t i = 1; i <= s.base.size(); ++i) {
        BidderId id = s.base.at_rank(i).id;
        std::size_t now = *plan.modified.rank_of(id);
        if (now != i) {
            plan.keeps_positions = false;
            plan.moved.push_back({id, {i, now}});
        }
    }
}

inline bool verify_i_side(const MediatorScenario& s, const BidProfile& modified,
                          double tol = kDefaultTol) {
    auto ids = s.i_ids();
    if (ids.empty()) return true;
    return verify_sne(s.curve, s.bidders, modified, tol, s.reserve, ids).is_sne;
}

// Shared tail of the block-flattening strategies (top and nonsym): given the
// threshold r and the highest flattenable base rank cap (= L for both, the
// block never flattens below its own extent), locate the flatten depth,
// price the plan, and hand back either the plan or the reason there is none.
inline PlanOutcome finish_block_plan(const MediatorScenario& s, PlanKind kind, std::size_t first_flat,
                                     std::size_t cap, RStar rs) {
    PlanOutcome out;
    out.r_star = rs.value;
    double r = rs.value;
    if (r > s.base.score_at(1)) {
        out.no_improvement = "outsider threshold exceeds the top bid";
        return out;
    }
    std::size_t l = 1;
    while (l < s.base.size() && s.base.score_at(l + 1) >= r) ++l;
    if (l > cap) {
        l = cap;
        r = std::max(s.base.score_at(l + 1), s.reserve);
    }
    if (l < first_flat) {
        out.no_improvement = "no coalition bid sits above the outsider threshold";
        return out;
    }
    double savings = 0.0;
    for (std::size_t j = 1; j + 1 <= l; ++j)
        savings += s.curve.gamma(j) * (s.base.score_at(j + 1) - r);
    if (savings <= kDefaultTol) {
        out.no_improvement = "flattening saves nothing";
        return out;
    }

    MediatorPlan plan;
    plan.kind = kind;
    plan.share = s.share;
    plan.m_ids = s.m_ids;
    plan.r_star = rs.value;
    plan.flat_score = r;
    plan.flat_lo = first_flat;
    plan.flat_hi = l;
    plan.modified = flattened_profile(s, first_flat, l, r);
    plan.payoff_per_share = savings;
    fill_prices(s, plan);
    fill_movement(s, plan);
    plan.i_verified = verify_i_side(s, plan.modified);
    out.plan = std::move(plan);
    return out;
}

}  // namespace detail

/// Outsider threshold when the coalition holds the top L positions: each
/// I-bidder compares its spot against taking position 1 at the flattened
/// price. Requires the coalition to be exactly base ranks 1..L.
inline RStar r_star_top(const MediatorScenario& s, std::size_t L) {
    detail::require_m_block(s, 1, L);
    if (s.curve.slots() < 1) throw invalid_input("need at least one slot");
    RStar rs;
    rs.value = s.reserve;
    for (std::size_t j = L + 1; j <= s.base.size(); ++j) {
        double x = detail::entry_threshold(s, j, s.curve.gamma(1));
        rs.thresholds.push_back({j, s.base.at_rank(j).id, x});
        rs.value = std::max(rs.value, x);
    }
    return rs;
}

/// Flattens the top-l bids down to the outsider threshold. All coalition
/// positions are preserved; savings accrue at ranks 1..l-1.
inline PlanOutcome plan_top(const MediatorScenario& s, std::size_t L) {
    return detail::finish_block_plan(s, PlanKind::top, 1, L, r_star_top(s, L));
}

/// Outsider threshold for a coalition at base ranks l+1..l+L (anchor l >= 1):
/// outsiders above and below compare against entering at position l+1.
inline RStar r_star_interior(const MediatorScenario& s, std::size_t anchor, std::size_t L) {
    if (anchor < 1) throw invalid_input("anchor must be >= 1");
    detail::require_m_block(s, anchor + 1, anchor + L);
    if (s.curve.gamma(anchor + 1) == 0.0)
        throw invalid_input("anchor position is past the slate: no clicks to mediate");
    RStar rs;
    rs.value = s.reserve;
    for (std::size_t j = 1; j <= s.base.size(); ++j) {
        if (j > anchor && j <= anchor + L) continue;
        double x = detail::entry_threshold(s, j, s.curve.gamma(anchor + 1));
        rs.thresholds.push_back({j, s.base.at_rank(j).id, x});
        rs.value = std::max(rs.value, x);
    }
    return rs;
}

/// Interior-block flattening: ranks anchor+2 .. anchor+s-1 drop to the
/// outsider threshold, leaving the block's first bid (which prices the
/// bidder above) and every outsider untouched. Savings accrue at coalition
/// ranks anchor+1 .. anchor+s-2.
inline PlanOutcome plan_interior(const MediatorScenario& s, std::size_t anchor, std::size_t L) {
    RStar rs = r_star_interior(s, anchor, L);
    PlanOutcome out;
    out.r_star = rs.value;
    double r = rs.value;

    if (r > s.base.score_at(anchor + 2)) {
        out.no_improvement = "outsider threshold exceeds every flattenable coalition bid";
        return out;
    }
    std::size_t hi = anchor + 2;
    while (hi < s.base.size() && s.base.score_at(hi + 1) >= r) ++hi;
    if (hi > anchor + L) {
        hi = anchor + L;
        r = std::max(s.base.score_at(hi + 1), s.reserve);
    }
    double savings = 0.0;
    for (std::size_t j = anchor + 1; j + 1 <= hi; ++j)
        savings += s.curve.gamma(j) * (s.base.score_at(j + 1) - r);
    if (savings <= kDefaultTol) {
        out.no_improvement = "flattening saves nothing";
        return out;
    }

    MediatorPlan plan;
    plan.kind = PlanKind::interior;
    plan.share = s.share;
    plan.m_ids = s.m_ids;
    plan.r_star = rs.value;
    plan.flat_score = r;
    plan.flat_lo = anchor + 2;
    plan.flat_hi = hi;
    plan.modified = detail::flattened_profile(s, anchor + 2, hi, r);
    plan.payoff_per_share = savings;
    detail::fill_prices(s, plan);
    detail::fill_movement(s, plan);
    plan.i_verified = detail::verify_i_side(s, plan.modified);
    out.plan = std::move(plan);
    return out;
}

/// Variant of the top threshold for bases that are plain best-response
/// equilibria rather than symmetric ones: an outsider taking a coalition
/// position must outbid the flattened block, which caps its CTR at
/// position 2, so gamma_2 replaces gamma_1 in the threshold.
inline RStar r_star_nonsym(const MediatorScenario& s, std::size_t L) {
    detail::require_m_block(s, 1, L);
    if (s.curve.slots() < 2) throw invalid_input("need at least two slots");
    RStar rs;
    rs.value = s.reserve;
    for (std::size_t j = L + 1; j <= s.base.size(); ++j) {
        double x = detail::entry_threshold(s, j, s.curve.gamma(2));
        rs.thresholds.push_back({j, s.base.at_rank(j).id, x});
        rs.value = std::max(rs.value, x);
    }
    return rs;
}

/// Like plan_top but keeps the rank-1 bid intact and flattens ranks 2..l, so
/// outsiders can never reach position 1 below its original cost. Savings are
/// the same sum (rank 1's price drops to the flattened score).
inline PlanOutcome plan_nonsym(const MediatorScenario& s, std::size_t L) {
    return detail::finish_block_plan(s, PlanKind::nonsym, 2, L, r_star_nonsym(s, L));
}

/// Slide plan: the whole top-L coalition drops one position, conceding
/// position 1 to the bidder at rank L+1, and bids a uniform score r' chosen
/// maximal such that the slid profile keeps its structure and every
/// I-bidder's incentive check passes with positive coalition savings.
/// Candidates for r' are the standing bid scores, the bidders' value scores
/// (a block bidding at an outsider's value score leaves that outsider
/// nothing to gain by outbidding it) and the reserve.
inline PlanOutcome plan_slide(const MediatorScenario& s, std::size_t L) {
    detail::require_m_block(s, 1, L);
    const std::size_t n = s.base.size();
    if (L + 1 > n)
        throw invalid_input("slide needs an I-bidder able to take position 1");

    const BidderId pivot = s.base.at_rank(L + 1).id;
    const double pivot_score = s.base.score_at(L + 1);

    std::set<double> cands;
    for (std::size_t j = 1; j <= n; ++j) cands.insert(s.base.score_at(j));
    for (const auto& b : s.bidders) cands.insert(b.score());
    cands.insert(s.reserve);

    Allocation before = allocate(s.curve, s.bidders, s.base, s.reserve);
    double base_pay = 0.0;
    for (BidderId id : s.m_ids)
        if (const auto* slot = before.slot_of(id)) base_pay += slot->payment_per_impression;

    std::string first_failure;
    for (auto it = cands.rbegin(); it != cands.rend(); ++it) {
        double r = *it;
        if (!(r >= 0.0) || r >= pivot_score) continue;

        BidProfile modified = detail::flattened_profile(s, 1, L, r);
        bool structural = modified.at_rank(1).id == pivot;
        for (std::size_t k = 1; structural && k <= L; ++k)
            structural = modified.at_rank(k + 1).id == s.base.at_rank(k).id;
        for (std::size_t j = L + 2; structural && j <= n; ++j)
            structural = modified.at_rank(j).id == s.base.at_rank(j).id;
        if (!structural) {
            if (first_failure.empty())
                first_failure = "structure breaks at r' = " + std::to_string(r);
            continue;
        }
        if (!detail::verify_i_side(s, modified)) {
            if (first_failure.empty())
                first_failure = "an I-bidder deviates at r' = " + std::to_string(r);
            continue;
        }

        Allocation after = allocate(s.curve, s.bidders, modified, s.reserve);
        double new_pay = 0.0;
        for (BidderId id : s.m_ids)
            if (const auto* slot = after.slot_of(id)) new_pay += slot->payment_per_impression;
        double savings = base_pay - new_pay;
        if (savings <= kDefaultTol) {
            if (first_failure.empty())
                first_failure = "no savings at r' = " + std::to_string(r);
            continue;
        }

        MediatorPlan plan;
        plan.kind = PlanKind::slide;
        plan.share = s.share;
        plan.m_ids = s.m_ids;
        plan.r_star = r;
        plan.flat_score = r;
        plan.flat_lo = 1;
        plan.flat_hi = L;
        plan.modified = std::move(modified);
        plan.payoff_per_share = savings;
        detail::fill_prices(s, plan);
        detail::fill_movement(s, plan);
        plan.i_verified = true;
        PlanOutcome out;
        out.r_star = r;
        out.plan = std::move(plan);
        return out;
    }
    throw invalid_input("no admissible slide level: " +
                        (first_failure.empty() ? std::string("no candidate below the pivot bid")
                                               : first_failure));
}

/// Per-I-bidder incentive audit of a plan: payoff in the modified profile,
/// best payoff over all deviations, slack, the strategy's indifference
/// threshold x_j, and whether the bidder's price or position moved.
struct IncentiveReport {
    struct Row {
        BidderId id = 0;
        std::size_t base_rank = 0;
        std::size_t new_rank = 0;
        double x = 0.0;
        double payoff = 0.0;
        double best_deviation = 0.0;
        double slack = 0.0;
        bool price_changed = false;
        bool pass = true;
    };
    std::vector<Row> rows;
    bool all_pass = true;
};

inline IncentiveReport verify_i_incentives(const MediatorScenario& s, const MediatorPlan& plan,
                                           double tol = kDefaultTol) {
    IncentiveReport report;
    Allocation before = allocate(s.curve, s.bidders, s.base, s.reserve);
    Allocation after = allocate(s.curve, s.bidders, plan.modified, s.reserve);

    double gamma_entry = s.curve.gamma(1);
    if (plan.kind == PlanKind::interior) gamma_entry = s.curve.gamma(plan.flat_lo - 1);
    if (plan.kind == PlanKind::nonsym || plan.kind == PlanKind::slide)
        gamma_entry = s.curve.gamma(2);

    const std::size_t n = plan.modified.size();
    const std::size_t max_target = std::max(n, s.curve.slots());
    for (std::size_t i = 1; i <= n; ++i) {
        const auto& e = plan.modified.at_rank(i);
        if (s.m_ids.count(e.id)) continue;
        const Bidder& owner = bidder_by_id(s.bidders, e.id);

        IncentiveReport::Row row;
        row.id = e.id;
        row.base_rank = *s.base.rank_of(e.id);
        row.new_rank = i;
        row.x = gamma_entry > 0.0 ? detail::entry_threshold(s, row.base_rank, gamma_entry)
                                  : s.reserve;
        row.payoff = detail::rank_payoff(s.curve, s.bidders, plan.modified, i, s.reserve);
        row.best_deviation = 0.0;
        for (std::size_t t = 1; t <= max_target; ++t) {
            if (t == i) continue;
            row.best_deviation =
                std::max(row.best_deviation, detail::deviation_payoff(s.curve, plan.modified,
                                                                      owner.score(), i, t, s.reserve));
        }
        row.slack = row.payoff - row.best_deviation;
        const auto* pb = before.slot_of(e.id);
        const auto* pa = after.slot_of(e.id);
        row.price_changed = (pb ? pb->price_score : 0.0) != (pa ? pa->price_score : 0.0);
        row.pass = row.slack >= -tol && (!row.price_changed || row.new_rank != row.base_rank);
        report.rows.push_back(row);
        report.all_pass = report.all_pass && row.pass;
    }
    return report;
}

/// Click-by-click settlement of a plan. Per click on coalition bidder i the
/// mediator keeps share * (p_i - p~_i); every coalition member receives
/// (1 - share) * (p_i - p~_i) / |M|. Clicks on outsiders carry no savings
/// and are listed untouched.
struct SettlementLedger {
    struct Event {
        BidderId id = 0;
        long long clicks = 0;
        double saving_per_click = 0.0;
        double mediator_take = 0.0;
        double rebate_pool = 0.0;
    };
    std::vector<Event> events;
    std::vector<BidderId> ignored;                // clicked non-coalition bidders
    std::map<BidderId, double> rebate_by_member;  // equal split of every pool
    double mediator_total = 0.0;
    double savings_total = 0.0;
};

inline SettlementLedger settle(const MediatorPlan& plan,
                               const std::map<BidderId, long long>& clicks) {
    SettlementLedger ledger;
    const double members = static_cast<double>(plan.m_ids.size());
    for (BidderId id : plan.m_ids) ledger.rebate_by_member[id] = 0.0;
    for (const auto& [id, count] : clicks) {
        if (count < 0) throw invalid_input("negative click count for bidder " + std::to_string(id));
        if (!plan.m_ids.count(id)) {
            if (count > 0) ledger.ignored.push_back(id);
            continue;
        }
        double delta = plan.saving_per_click.at(id);
        SettlementLedger::Event ev;
        ev.id = id;
        ev.clicks = count;
        ev.saving_per_click = delta;
        ev.mediator_take = plan.share * delta * static_cast<double>(count);
        ev.rebate_pool = (1.0 - plan.share) * delta * static_cast<double>(count);
        ledger.events.push_back(ev);
        ledger.mediator_total += ev.mediator_take;
        ledger.savings_total += delta * static_cast<double>(count);
        for (BidderId m : plan.m_ids)
            ledger.rebate_by_member[m] += ev.rebate_pool / members;
    }
    return ledger;
}

}  // namespace adlab
