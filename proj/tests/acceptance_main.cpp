// Acceptance gate: one line per criterion, [PASS] or [FAIL], exit 1 on any
// failure. Tolerances are pinned here, not read from the environment.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <adlab/adlab.hpp>

#include "testutil.hpp"

using namespace adlab;
using testutil::Instance;
using testutil::Rng;

namespace {

constexpr double kTol = 1e-9;
constexpr double kGridTol = 1e-6;
constexpr double kBisectTol = 1e-6;

struct Gate {
    int failures = 0;
    int index = 0;

    void check(const std::string& what, const std::function<bool(std::string&)>& body) {
        ++index;
        std::string detail;
        bool ok = false;
        try {
            ok = body(detail);
        } catch (const std::exception& e) {
            detail = e.what();
        }
        std::printf("[%s] criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", index, what.c_str(),
                    detail.empty() ? "" : " -- ", detail.c_str());
        if (!ok) ++failures;
    }
};

bool near(double a, double b, double tol = kTol) { return std::abs(a - b) <= tol; }

bool expect(std::string& detail, bool ok, const std::string& why) {
    if (!ok && detail.empty()) detail = why;
    return ok;
}

MediatorScenario reference_scenario(std::set<BidderId> m_ids) {
    auto m = testutil::reference_market();
    return make_scenario(m.curve, m.bidders, m.base, std::move(m_ids), 0.5);
}

// --------------------------------------------------------------------------

bool criterion_reference_equilibrium(std::string& d) {
    auto m = testutil::reference_market();
    if (!expect(d, verify_sne(m.curve, m.bidders, m.base, kTol).is_sne, "profile not verified"))
        return false;

    auto rows = sne_adjacent_report(m.curve, m.bidders, m.base, kTol);
    const double payoffs[] = {6, 3.6, 2.5, 1.6, 1.2, 0.8, 0.3, 0.3, 0};
    const double up[] = {0, 2, 2.4, 1.5, 1.2, 0.6, 0.2, 0.3, 0};
    const double down[] = {6, 3.5, 2.4, 1.5, 1.2, 0.75, 0.3, 0, 0};
    if (!expect(d, rows.size() == 9, "expected nine rows")) return false;
    for (std::size_t j = 0; j < 9; ++j) {
        bool row_ok = near(rows[j].payoff, payoffs[j]) && rows[j].satisfied &&
                      near(rows[j].payoff_down.value_or(-1), down[j]) &&
                      (j == 0 ? !rows[j].payoff_up.has_value()
                              : near(rows[j].payoff_up.value_or(-1), up[j]));
        if (!expect(d, row_ok, "row " + std::to_string(j + 1) + " off")) return false;
    }
    return true;
}

bool criterion_top_thresholds(std::string& d) {
    auto s = reference_scenario({1, 2, 3, 4, 5});
    RStar rs = r_star_top(s, 5);
    const double xs[] = {14.2, 11.7, 11.7, 9};
    if (!expect(d, rs.thresholds.size() == 4, "expected four outsider thresholds")) return false;
    for (std::size_t i = 0; i < 4; ++i)
        if (!expect(d, near(rs.thresholds[i].x, xs[i]),
                    "threshold at rank " + std::to_string(rs.thresholds[i].rank) + " off"))
            return false;
    if (!expect(d, near(rs.value, 14.2), "binding threshold off")) return false;

    PlanOutcome plan = plan_top(s, 5);
    if (!expect(d, plan.improved() && near(plan->payoff_per_share, 7.28), "coalition savings off"))
        return false;
    return expect(d, plan->flat_lo == 1 && plan->flat_hi == 4, "flatten depth off");
}

bool criterion_top_rewrite(std::string& d) {
    auto s = reference_scenario({1, 2, 3, 4, 5});
    PlanOutcome plan = plan_top(s, 5);
    if (!expect(d, plan.improved(), "no plan")) return false;

    const double scores[] = {14.2, 14.2, 14.2, 14.2, 14};
    const double prices[] = {14.2, 14.2, 14.2, 14, 13};
    Allocation after = allocate(s.curve, s.bidders, plan->modified);
    for (std::size_t i = 0; i < 5; ++i) {
        if (!expect(d, near(plan->modified.score_at(i + 1), scores[i]),
                    "rewritten bid at rank " + std::to_string(i + 1) + " off"))
            return false;
        if (!expect(d, near(after.slots[i].price_score, prices[i]),
                    "price at rank " + std::to_string(i + 1) + " off"))
            return false;
    }
    return expect(d, plan->keeps_positions && plan->i_verified, "plan disturbed the market");
}

bool criterion_slide(std::string& d) {
    auto s = reference_scenario({1, 2, 3, 4, 5});
    PlanOutcome plan = plan_slide(s, 5);
    if (!expect(d, plan.improved(), "no plan")) return false;
    if (!expect(d, near(plan->flat_score, 12.0), "slide level off")) return false;
    if (!expect(d, near(plan->payoff_per_share, 22.8), "slide savings off")) return false;
    if (!expect(d, plan->modified.at_rank(1).id == 6, "pivot did not take the top spot"))
        return false;
    return expect(d, plan->i_verified && verify_i_incentives(s, *plan, kTol).all_pass,
                  "outsider incentives unverified");
}

bool criterion_interior_no_improvement(std::string& d) {
    auto s = reference_scenario({2, 3, 4, 5});
    PlanOutcome plan = plan_interior(s, 1, 4);
    if (!expect(d, !plan.improved(), "unexpected plan")) return false;
    return expect(d, near(plan.r_star, 16.0), "binding threshold off");
}

bool criterion_revenue_identity(std::string& d) {
    auto m = testutil::reference_market();
    double direct = revenue_min_sne(m.curve, scores_of(m.bidders));
    if (!expect(d, near(direct, 47.5), "reference revenue off")) return false;

    Allocation alloc = allocate(m.curve, m.bidders, min_sne_bids(m.curve, m.bidders));
    double via_prices = 0.0;
    for (const auto& s : alloc.slots) via_prices += s.payment_per_impression;
    if (!expect(d, near(via_prices, 47.5), "reference summed payments off")) return false;

    Rng rng(6001);
    for (int trial = 0; trial < 200; ++trial) {
        auto curve = testutil::random_curve(rng, testutil::pick(rng, 1, 8));
        auto bidders = testutil::random_bidders(rng, testutil::pick(rng, 2, 12));
        BidProfile p = min_sne_bids(curve, bidders);
        if (!expect(d, verify_sne(curve, bidders, p, kTol).is_sne,
                    "lowest bids not an equilibrium at trial " + std::to_string(trial)))
            return false;
        Allocation a = allocate(curve, bidders, p);
        double paid = 0.0;
        for (const auto& s : a.slots) paid += s.payment_per_impression;
        double want = revenue_min_sne(curve, scores_of(bidders));
        if (!expect(d, near(paid, want, kTol * (1.0 + std::abs(want))),
                    "revenue mismatch at trial " + std::to_string(trial)))
            return false;
    }
    return true;
}

bool criterion_revenue_condition_sound(std::string& d) {
    Rng rng(7001);
    int held = 0, attempts = 0;
    while (held < 200 && attempts < 4000) {
        ++attempts;
        ForkInstance inst;
        if (attempts % 2 == 0) {
            std::size_t K = testutil::pick(rng, 2, 5);
            inst = make_example1(K, testutil::uniform(rng, 0.3, 0.7),
                                 testutil::uniform(rng, 0.05, 0.95),
                                 testutil::pick(rng, 1, std::min<std::size_t>(4, K)));
        } else {
            inst.curve = testutil::random_curve(rng, testutil::pick(rng, 2, 6));
            inst.spec = ForkSpec{testutil::pick(rng, 1, inst.curve.slots()),
                                 testutil::pick(rng, 1, 4),
                                 testutil::uniform(rng, 0.05, 0.99 / inst.curve.gamma(1))};
            inst.scores = testutil::separated_scores(rng, inst.curve.slots() + 5);
        }
        MergedCurve merged;
        ConditionCheck cond;
        try {
            merged = fork(inst.curve, inst.spec, TiePolicy::prefer_original);
            cond = check_theorem_rev1(inst.curve, merged, inst.scores);
        } catch (const invalid_input&) {
            continue;
        }
        if (!cond.holds) continue;
        ++held;
        double before = revenue_min_sne(inst.curve, inst.scores);
        double after = revenue_after_fork(merged, inst.scores);
        if (!expect(d, after > before,
                    "condition held but revenue fell (attempt " + std::to_string(attempts) + ")"))
            return false;
    }
    return expect(d, held == 200, "only " + std::to_string(held) + " satisfying instances");
}

bool criterion_efficiency_condition_sound(std::string& d) {
    Rng rng(8001);
    int held = 0, attempts = 0;
    while (held < 200 && attempts < 4000) {
        ++attempts;
        ForkInstance inst;
        if (attempts % 2 == 0) {
            std::size_t K = testutil::pick(rng, 2, 5);
            Example2 ex = make_example2(K, testutil::uniform(rng, 0.3, 0.7), 0.5,
                                        testutil::pick(rng, 2, std::min<std::size_t>(4, K)),
                                        testutil::uniform(rng, 0.2, 0.8));
            inst = ex.instance;
            inst.spec.f = std::min(0.99, ex.threshold + testutil::uniform(rng, 0.01, 0.2));
        } else {
            inst.curve = testutil::random_curve(rng, testutil::pick(rng, 1, 6));
            inst.spec = ForkSpec{testutil::pick(rng, 1, inst.curve.slots()),
                                 testutil::pick(rng, 1, 4),
                                 testutil::uniform(rng, 0.05, 0.99 / inst.curve.gamma(1))};
            inst.scores = testutil::random_scores(rng, inst.curve.slots() + 5);
        }
        MergedCurve merged;
        ConditionCheck cond;
        try {
            merged = fork(inst.curve, inst.spec, TiePolicy::prefer_original);
            cond = check_theorem_eff1(inst.curve, merged, inst.scores);
        } catch (const invalid_input&) {
            continue;
        }
        if (!cond.holds) continue;
        ++held;
        double before = efficiency(inst.curve, inst.scores);
        double after = efficiency_after_fork(merged, inst.scores);
        if (!expect(d, after > before,
                    "condition held but efficiency fell (attempt " + std::to_string(attempts) + ")"))
            return false;
    }
    return expect(d, held == 200, "only " + std::to_string(held) + " satisfying instances");
}

bool criterion_efficiency_monotone(std::string& d) {
    Rng rng(9001);
    for (int trial = 0; trial < 100; ++trial) {
        auto curve = testutil::random_curve(rng, testutil::pick(rng, 1, 6));
        std::size_t l = testutil::pick(rng, 1, curve.slots());
        std::size_t L = testutil::pick(rng, 1, 4);
        auto scores = testutil::separated_scores(rng, curve.slots() + L + 1);

        double prev = -1.0;
        double f_hi = 0.98 / curve.gamma(1);
        for (int step = 0; step < 50; ++step) {
            double f = 0.02 + (f_hi - 0.02) * static_cast<double>(step) / 49.0;
            MergedCurve merged = fork(curve, ForkSpec{l, L, f}, TiePolicy::prefer_original);
            double e = efficiency_after_fork(merged, scores);
            if (!expect(d, e > prev,
                        "efficiency not increasing at trial " + std::to_string(trial)))
                return false;
            prev = e;
        }
    }
    return true;
}

bool criterion_top_fork_loses(std::string& d) {
    Rng rng(10001);
    for (int trial = 0; trial < 50; ++trial) {
        ForkInstance inst = testutil::top_loss_instance(rng);
        if (!expect(d, check_lemma_preconditions(inst.curve, inst.scores, 1).top_slot_loss_applies,
                    "generated instance misses the preconditions"))
            return false;
        double before = revenue_min_sne(inst.curve, inst.scores);
        for (std::size_t L : {std::size_t{1}, std::size_t{2}, std::size_t{4}}) {
            for (int step = 0; step < 50; ++step) {
                double f = (0.05 + 0.9 * static_cast<double>(step) / 49.0) / inst.curve.gamma(1);
                if (!(f > 0.0) || !(f * inst.curve.gamma(1) < 1.0)) continue;
                MergedCurve merged = fork(inst.curve, ForkSpec{1, L, f},
                                          TiePolicy::prefer_original);
                double voc = value_of_capacity(revenue_after_fork(merged, inst.scores), before);
                if (!expect(d, voc < 0.0, "top fork gained at trial " + std::to_string(trial)))
                    return false;
            }
        }
    }
    return true;
}

bool criterion_lower_fork_monotone_loss(std::string& d) {
    Rng rng(11001);
    for (int trial = 0; trial < 50; ++trial) {
        ForkInstance inst = testutil::lower_loss_instance(rng);
        if (!expect(d,
                    check_lemma_preconditions(inst.curve, inst.scores, inst.spec.l)
                        .lower_slot_loss_applies,
                    "generated instance misses the preconditions"))
            return false;
        for (std::size_t L = 1; L <= 4; ++L) {
            double prev = std::numeric_limits<double>::infinity();
            for (int step = 0; step < 50; ++step) {
                double f = (0.05 + 0.9 * static_cast<double>(step) / 49.0) / inst.curve.gamma(1);
                MergedCurve merged = fork(inst.curve, ForkSpec{inst.spec.l, L, f},
                                          TiePolicy::prefer_original);
                double rev = revenue_after_fork(merged, inst.scores);
                if (!expect(d, rev < prev,
                            "revenue not falling in f at trial " + std::to_string(trial)))
                    return false;
                prev = rev;
            }
        }

        double f_mid = 0.5 / inst.curve.gamma(1);
        double prev_l = std::numeric_limits<double>::infinity();
        for (std::size_t L = 1; L <= 4; ++L) {
            MergedCurve merged = fork(inst.curve, ForkSpec{inst.spec.l, L, f_mid},
                                      TiePolicy::prefer_original);
            double rev = revenue_after_fork(merged, inst.scores);
            if (!expect(d, rev < prev_l,
                        "revenue not falling in L at trial " + std::to_string(trial)))
                return false;
            prev_l = rev;
        }
    }
    return true;
}

bool criterion_break_even(std::string& d) {
    Example2 ex = make_example2(3, 0.5, 0.8, 3, 0.5);
    auto f = critical_fitness(ex.instance.curve, ex.instance.scores, 3, 3,
                              CriticalTarget::efficiency, 0.02, 0.98, 1e-8);
    if (!expect(d, f.has_value(), "no crossing found")) return false;
    if (!expect(d, std::abs(*f - ex.threshold) <= kBisectTol, "crossing off the closed form"))
        return false;

    auto below = check_theorem_eff1(
        ex.instance.curve, fork(ex.instance.curve, ForkSpec{3, 3, ex.threshold - 1e-4}),
        ex.instance.scores);
    auto above = check_theorem_eff1(
        ex.instance.curve, fork(ex.instance.curve, ForkSpec{3, 3, ex.threshold + 1e-4}),
        ex.instance.scores);
    if (!expect(d, !below.holds && above.holds, "condition does not flip across the crossing"))
        return false;

    Rng rng(12001);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t K = testutil::pick(rng, 2, 5);
        Example2 r = make_example2(K, testutil::uniform(rng, 0.3, 0.7), 0.5,
                                   testutil::pick(rng, 2, std::min<std::size_t>(4, K)),
                                   testutil::uniform(rng, 0.2, 0.8));
        auto fr = critical_fitness(r.instance.curve, r.instance.scores, r.instance.spec.l,
                                   r.instance.spec.L, CriticalTarget::efficiency, 0.02, 0.98,
                                   1e-8);
        if (!expect(d, fr.has_value() && std::abs(*fr - r.threshold) <= kBisectTol,
                    "random crossing off at trial " + std::to_string(trial)))
            return false;
    }
    return true;
}

bool criterion_oracle_agreement(std::string& d) {
    Rng rng(13001);
    const double step = 0.01;
    for (int trial = 0; trial < 100; ++trial) {
        auto curve = testutil::random_curve(rng, testutil::pick(rng, 1, 6));
        auto bidders = testutil::random_bidders(rng, testutil::pick(rng, 2, 6));
        BidProfile base = min_sne_bids(curve, bidders);

        auto clean = best_response_oracle(curve, bidders, base, step);
        if (!expect(d, clean.max_gain <= kGridTol,
                    "deviation found at an equilibrium (trial " + std::to_string(trial) + ")"))
            return false;

        // Push one bid up and compare the two detectors.
        std::size_t victim = testutil::pick(rng, 1, base.size());
        std::vector<Bid> bids;
        for (const auto& e : base.entries()) {
            double b = e.bid;
            if (*base.rank_of(e.id) == victim) b *= testutil::uniform(rng, 1.05, 1.6);
            bids.push_back({e.id, b, e.tie_rank});
        }
        BidProfile pushed = BidProfile::from_bids(bidders, bids);

        auto flagged = verify_sne(curve, bidders, pushed, kGridTol);
        auto searched = best_response_oracle(curve, bidders, pushed, step);
        if (searched.max_gain > kGridTol) {
            if (!expect(d, !flagged.is_sne,
                        "search finds a gain the check misses (trial " + std::to_string(trial) + ")"))
                return false;
        }
        double strong = 0.0;
        for (const auto& v : flagged.violations) strong = std::max(strong, v.gain);
        if (strong > 0.05) {
            if (!expect(d, searched.max_gain > kGridTol,
                        "check finds a gain the search misses (trial " + std::to_string(trial) + ")"))
                return false;
        }
    }
    return true;
}

bool criterion_plan_audit(std::string& d) {
    Rng rng(14001);
    int planned = 0;
    for (int trial = 0; trial < 200; ++trial) {
        Instance inst = testutil::random_sne_instance(rng, 2, 6);
        auto s_ids = [&](std::size_t lo, std::size_t hi) {
            std::set<BidderId> ids;
            for (std::size_t i = lo; i <= hi; ++i) ids.insert(inst.base.at_rank(i).id);
            return ids;
        };

        PlanOutcome outcome;
        MediatorScenario sc;
        switch (testutil::pick(rng, 0, 2)) {
            case 0: {
                std::size_t L = testutil::pick(rng, 2, inst.base.size() - 1);
                sc = make_scenario(inst.curve, inst.bidders, inst.base, s_ids(1, L), 0.5);
                outcome = plan_top(sc, L);
                break;
            }
            case 1: {
                std::size_t L = testutil::pick(rng, 2, inst.base.size() - 1);
                sc = make_scenario(inst.curve, inst.bidders, inst.base, s_ids(1, L), 0.5);
                outcome = plan_nonsym(sc, L);
                break;
            }
            default: {
                std::size_t max_anchor = std::min(inst.curve.slots() - 1, inst.base.size() - 2);
                if (max_anchor < 1) continue;
                std::size_t anchor = testutil::pick(rng, 1, max_anchor);
                std::size_t L = testutil::pick(rng, 1, inst.base.size() - anchor);
                sc = make_scenario(inst.curve, inst.bidders, inst.base,
                                   s_ids(anchor + 1, anchor + L), 0.5);
                outcome = plan_interior(sc, anchor, L);
                break;
            }
        }
        if (!outcome.improved()) continue;
        ++planned;
        const MediatorPlan& plan = *outcome;

        if (!expect(d, plan.keeps_positions && plan.i_verified,
                    "plan moved the market at trial " + std::to_string(trial)))
            return false;
        if (!expect(d, verify_i_incentives(sc, plan, kTol).all_pass,
                    "outsider audit failed at trial " + std::to_string(trial)))
            return false;

        Allocation before = allocate(sc.curve, sc.bidders, sc.base, sc.reserve);
        Allocation after = allocate(sc.curve, sc.bidders, plan.modified, sc.reserve);
        for (BidderId id : sc.i_ids()) {
            const auto* pb = before.slot_of(id);
            const auto* pa = after.slot_of(id);
            bool same = (pb == nullptr) == (pa == nullptr) &&
                        (!pb || pb->price_score == pa->price_score);
            if (!expect(d, same, "outsider price moved at trial " + std::to_string(trial)))
                return false;
        }

        double delta = 0.0;
        for (BidderId id : plan.m_ids) {
            const auto* pb = before.slot_of(id);
            const auto* pa = after.slot_of(id);
            delta += (pb ? pb->payment_per_impression : 0.0) -
                     (pa ? pa->payment_per_impression : 0.0);
        }
        if (!expect(d, near(delta, plan.payoff_per_share, kTol * (1.0 + std::abs(delta))),
                    "savings do not match payments at trial " + std::to_string(trial)))
            return false;
    }
    return expect(d, planned >= 50, "only " + std::to_string(planned) + " plans materialized");
}

}  // namespace

int main() {
    Gate gate;
    gate.check("reference bids verify as an equilibrium and the adjacent-move table matches",
               criterion_reference_equilibrium);
    gate.check("top-coalition outsider thresholds and savings match the worked values",
               criterion_top_thresholds);
    gate.check("top plan rewrites block bids and prices as worked", criterion_top_rewrite);
    gate.check("slide plan concedes the top slot at the worked level with outsiders verified",
               criterion_slide);
    gate.check("interior coalition on the reference market reports no improvement at threshold 16",
               criterion_interior_no_improvement);
    gate.check("lowest-equilibrium revenue equals summed payments on reference and 200 random "
               "markets",
               criterion_revenue_identity);
    gate.check("revenue condition is sound across 200 satisfying fork instances",
               criterion_revenue_condition_sound);
    gate.check("efficiency condition is sound across 200 satisfying fork instances",
               criterion_efficiency_condition_sound);
    gate.check("efficiency after forking increases with fitness on 100 markets",
               criterion_efficiency_monotone);
    gate.check("top-slot forks lose revenue on 50 markets meeting the loss preconditions",
               criterion_top_fork_loses);
    gate.check("lower-slot fork revenue falls monotonically in fitness and sub-slots on 50 markets",
               criterion_lower_fork_monotone_loss);
    gate.check("break-even fitness matches the closed form within 1e-6 and the condition flips",
               criterion_break_even);
    gate.check("grid deviation search agrees with the equilibrium check on 100 markets",
               criterion_oracle_agreement);
    gate.check("plans keep outsider prices and positions with exact savings on 200 markets",
               criterion_plan_audit);

    if (gate.failures) {
        std::printf("%d criterion(s) failed\n", gate.failures);
        return 1;
    }
    std::printf("all %d criteria passed\n", gate.index);
    return 0;
}
