#pragma once

// Click-capacity expansion by forking a slot into sub-slots: merged CTR
// curves, revenue/efficiency before and after, and the sufficient conditions
// under which the expansion pays off.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "auction.hpp"
#include "core.hpp"

namespace adlab {

/// How to fork: slot l is replaced by L sub-slots whose CTRs are
/// gamma_l * f * gamma_k for k = 1..L, where f is the fitness of the forked
/// page (relative quality times any page-level boost, f * gamma_1 < 1).
struct ForkSpec {
    std::size_t l = 1;
    std::size_t L = 1;
    double f = 0.5;
};

enum class TiePolicy {
    error,            // equal merged CTRs abort with a diagnostic
    prefer_original,  // originals rank ahead of forked sub-slots on ties
};

/// The CTR curve after forking: original slots (minus slot l) merged with
/// the L sub-slots, sorted decreasing. Strictly decreasing under
/// TiePolicy::error; non-increasing runs can appear under prefer_original.
struct MergedCurve {
    struct Source {
        bool forked = false;
        std::size_t index = 0;  // original position j, or sub-slot k
    };

    std::vector<double> ctrs;
    std::vector<Source> provenance;
    std::size_t forked_slot = 0;     // l
    std::size_t sub_slots = 0;       // L
    double fitness = 0.0;            // f
    std::size_t crossing_index = 0;  // i_0, see fork()

    std::size_t slots() const { return ctrs.size(); }

    double gamma(std::size_t j) const {  // 1-based, 0 past the end
        return (j >= 1 && j <= ctrs.size()) ? ctrs[j - 1] : 0.0;
    }
};

inline double capacity(const MergedCurve& merged) {
    double c = 0.0;
    for (double g : merged.ctrs) c += g;
    return c;
}

inline void validate_fork(const SlotCurve& curve, const ForkSpec& spec) {
    if (curve.slots() < 1) throw invalid_input("fork needs at least one slot");
    if (spec.l < 1 || spec.l > curve.slots())
        throw invalid_input("fork slot l out of range: " + std::to_string(spec.l));
    if (spec.L < 1) throw invalid_input("sub-slot count L must be >= 1");
    if (!(spec.f > 0.0)) throw invalid_input("fitness f must be > 0");
    if (!(spec.f * curve.gamma(1) < 1.0))
        throw invalid_input("fitness too large: f * gamma_1 must be < 1");
}

/// Merges the curve with the forked sub-slots. The crossing index i_0 is the
/// deepest original position that still beats the best sub-slot:
/// max{ i : gamma_l * f * gamma_1 < gamma_i }; it is always >= l.
inline MergedCurve fork(const SlotCurve& curve, const ForkSpec& spec,
                        TiePolicy policy = TiePolicy::error) {
    validate_fork(curve, spec);

    struct Item {
        double ctr;
        MergedCurve::Source src;
    };
    std::vector<Item> items;
    for (std::size_t j = 1; j <= curve.slots(); ++j) {
        if (j == spec.l) continue;
        items.push_back({curve.gamma(j), {false, j}});
    }
    const double g_l = curve.gamma(spec.l);
    for (std::size_t k = 1; k <= spec.L; ++k)
        items.push_back({g_l * spec.f * curve.gamma(k), {true, k}});

    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.ctr != b.ctr) return a.ctr > b.ctr;
        return a.src.forked < b.src.forked;  // originals first on ties
    });
    if (policy == TiePolicy::error) {
        for (std::size_t i = 1; i < items.size(); ++i)
            if (items[i].ctr == items[i - 1].ctr)
                throw invalid_input("merged curve has tied CTRs at value " +
                                    std::to_string(items[i].ctr) +
                                    "; rerun with the originals-first tie policy");
    }

    MergedCurve merged;
    merged.forked_slot = spec.l;
    merged.sub_slots = spec.L;
    merged.fitness = spec.f;
    for (const auto& it : items) {
        merged.ctrs.push_back(it.ctr);
        merged.provenance.push_back(it.src);
    }

    const double best_sub = g_l * spec.f * curve.gamma(1);
    std::size_t i0 = 0;
    for (std::size_t i = 1; i <= curve.slots(); ++i)
        if (best_sub < curve.gamma(i)) i0 = i;
    merged.crossing_index = i0;
    return merged;
}

/// Minimum-SNE revenue over the merged curve (scores zero-padded).
inline double revenue_after_fork(const MergedCurve& merged, const std::vector<double>& scores) {
    return min_sne_revenue_over(merged.ctrs, scores);
}

inline double efficiency_after_fork(const MergedCurve& merged, const std::vector<double>& scores) {
    return efficiency_over(merged.ctrs, scores);
}

/// Relative revenue change (R - R0) / R0 of the fork.
inline double value_of_capacity(double revenue_after, double revenue_before) {
    if (!(revenue_before > 0.0))
        throw invalid_input("value of capacity undefined: base revenue must be > 0");
    return (revenue_after - revenue_before) / revenue_before;
}

/// Worst ratio of merged to original CTR drops at the affected positions:
/// min_{l <= j <= K} (tilde_gamma_j - tilde_gamma_{j+1}) / (gamma_j - gamma_{j+1}).
inline double eta(const SlotCurve& curve, const MergedCurve& merged) {
    double best = 0.0;
    bool first = true;
    for (std::size_t j = merged.forked_slot; j <= curve.slots(); ++j) {
        double num = merged.gamma(j) - merged.gamma(j + 1);
        double den = curve.gamma(j) - curve.gamma(j + 1);
        double ratio = num / den;
        if (first || ratio < best) best = ratio;
        first = false;
    }
    return best;
}

/// Worst ratio of merged to original CTR at the affected positions:
/// min_{l <= j <= K} tilde_gamma_j / gamma_j.
inline double beta(const SlotCurve& curve, const MergedCurve& merged) {
    double best = 1.0;
    bool first = true;
    for (std::size_t j = merged.forked_slot; j <= curve.slots(); ++j) {
        double ratio = merged.gamma(j) / curve.gamma(j);
        if (first || ratio < best) best = ratio;
        first = false;
    }
    return best;
}

struct ConditionCheck {
    double statistic = 0.0;  // eta or beta
    double threshold = 0.0;
    bool holds = false;      // statistic > threshold
};

/// Sufficient condition for the fork to raise minimum-SNE revenue:
/// eta > 1 - [ (gamma_l - tilde_gamma_l)(l-1) s_l
///             + sum_{j=K+1..K~} (tilde_gamma_j - tilde_gamma_{j+1}) j s_{j+1} ]
///           / sum_{j=l..K} (gamma_j - gamma_{j+1}) j s_{j+1}.
inline ConditionCheck check_theorem_rev1(const SlotCurve& curve, const MergedCurve& merged,
                                         const std::vector<double>& scores) {
    const std::size_t l = merged.forked_slot;
    const std::size_t K = curve.slots();
    const std::size_t Km = merged.slots();

    double den = 0.0;
    for (std::size_t j = l; j <= K; ++j)
        den += (curve.gamma(j) - curve.gamma(j + 1)) * static_cast<double>(j) *
               detail::padded(scores, j + 1);
    if (!(den > 0.0))
        throw invalid_input("revenue condition undefined: no score weight below the forked slot");

    double num = (curve.gamma(l) - merged.gamma(l)) * static_cast<double>(l - 1) *
                 detail::padded(scores, l);
    for (std::size_t j = K + 1; j <= Km; ++j)
        num += (merged.gamma(j) - merged.gamma(j + 1)) * static_cast<double>(j) *
               detail::padded(scores, j + 1);

    ConditionCheck check;
    check.statistic = eta(curve, merged);
    check.threshold = 1.0 - num / den;
    check.holds = check.statistic > check.threshold;
    return check;
}

/// Sufficient condition for the fork to raise efficiency:
/// beta > 1 - sum_{j=K+1..K~} tilde_gamma_j s_j / sum_{j=l..K} gamma_j s_j.
inline ConditionCheck check_theorem_eff1(const SlotCurve& curve, const MergedCurve& merged,
                                         const std::vector<double>& scores) {
    const std::size_t l = merged.forked_slot;
    const std::size_t K = curve.slots();
    const std::size_t Km = merged.slots();

    double den = 0.0;
    for (std::size_t j = l; j <= K; ++j) den += curve.gamma(j) * detail::padded(scores, j);
    if (!(den > 0.0))
        throw invalid_input("efficiency condition undefined: no score weight at the forked slots");

    double num = 0.0;
    for (std::size_t j = K + 1; j <= Km; ++j) num += merged.gamma(j) * detail::padded(scores, j);

    ConditionCheck check;
    check.statistic = beta(curve, merged);
    check.threshold = 1.0 - num / den;
    check.holds = check.statistic > check.threshold;
    return check;
}

/// One fitness sample of a capacity sweep.
struct SweepRow {
    double f = 0.0;
    double capacity = 0.0;
    double revenue = 0.0;
    double efficiency = 0.0;
    double value_of_capacity = 0.0;
    double eta = 0.0;
    double beta = 0.0;
    bool thm_rev1 = false;
    bool thm_eff1 = false;
};

struct SweepResult {
    double base_revenue = 0.0;
    double base_efficiency = 0.0;
    std::vector<SweepRow> rows;
    std::vector<std::pair<double, std::string>> skipped;  // (f, reason)
};

/// Evaluates the fork across a fitness grid. Grid values with
/// f * gamma_1 >= 1 are rejected before any row is computed; rows whose
/// merge hits a CTR tie under TiePolicy::error are skipped and reported.
inline SweepResult sweep_fitness(const SlotCurve& curve, const std::vector<double>& scores,
                                 std::size_t l, std::size_t L, const std::vector<double>& f_values,
                                 TiePolicy policy = TiePolicy::error) {
    for (double f : f_values) validate_fork(curve, ForkSpec{l, L, f});

    SweepResult result;
    result.base_revenue = revenue_min_sne(curve, scores);
    result.base_efficiency = efficiency(curve, scores);
    for (double f : f_values) {
        ForkSpec spec{l, L, f};
        MergedCurve merged;
        try {
            merged = fork(curve, spec, policy);
        } catch (const invalid_input& e) {
            result.skipped.emplace_back(f, e.what());
            continue;
        }
        SweepRow row;
        row.f = f;
        row.capacity = capacity(merged);
        row.revenue = revenue_after_fork(merged, scores);
        row.efficiency = efficiency_after_fork(merged, scores);
        row.value_of_capacity = value_of_capacity(row.revenue, result.base_revenue);
        row.eta = eta(curve, merged);
        row.beta = beta(curve, merged);
        row.thm_rev1 = check_theorem_rev1(curve, merged, scores).holds;
        row.thm_eff1 = check_theorem_eff1(curve, merged, scores).holds;
        result.rows.push_back(row);
    }
    return result;
}

/// Which quantity critical_fitness drives to its break-even point.
enum class CriticalTarget { revenue, efficiency };

struct LemmaReport {
    bool gap_holds = false;         // gamma_1 - gamma_2 is the largest CTR drop
    bool separation_holds = false;  // (j-1) s_j >= j s_{j+1} for all j >= 2
    bool top_slot_loss_applies = false;   // l == 1 together with both conditions
    bool lower_slot_loss_applies = false; // l >= 2 together with separation
    std::vector<std::size_t> gap_failures;
    std::vector<std::size_t> separation_failures;
};

/// Checks the score/curve conditions under which forking provably loses
/// minimum-SNE revenue (top slot) or loses it monotonically (lower slots).
inline LemmaReport check_lemma_preconditions(const SlotCurve& curve,
                                             const std::vector<double>& scores, std::size_t l) {
    LemmaReport report;
    const std::size_t K = curve.slots();
    const double top_gap = curve.gamma(1) - curve.gamma(2);
    report.gap_holds = true;
    for (std::size_t j = 2; j <= K; ++j) {
        if (curve.gamma(j) - curve.gamma(j + 1) > top_gap) {
            report.gap_holds = false;
            report.gap_failures.push_back(j);
        }
    }
    report.separation_holds = true;
    for (std::size_t j = 2; j + 1 <= scores.size(); ++j) {
        double lhs = static_cast<double>(j - 1) * detail::padded(scores, j);
        double rhs = static_cast<double>(j) * detail::padded(scores, j + 1);
        if (lhs < rhs) {
            report.separation_holds = false;
            report.separation_failures.push_back(j);
        }
    }
    report.top_slot_loss_applies = (l == 1) && report.gap_holds && report.separation_holds;
    report.lower_slot_loss_applies = (l >= 2) && report.separation_holds;
    return report;
}

/// Break-even fitness for the chosen target, found by bisection to an
/// absolute tolerance on f. The revenue target requires the monotone-loss
/// preconditions (separation with l >= 2); without them the revenue change
/// need not be monotone in f and the call refuses with a diagnostic. The
/// efficiency change is monotone in f unconditionally. Returns nullopt when
/// the target quantity does not change sign over [f_lo, f_hi]. Forks are
/// evaluated with the originals-first tie policy so the search can step
/// through tie points.
inline std::optional<double> critical_fitness(const SlotCurve& curve,
                                              const std::vector<double>& scores, std::size_t l,
                                              std::size_t L, CriticalTarget target, double f_lo,
                                              double f_hi, double tol = 1e-6) {
    if (!(f_lo > 0.0) || !(f_hi > f_lo)) throw invalid_input("need 0 < f_lo < f_hi");
    validate_fork(curve, ForkSpec{l, L, f_hi});
    if (!(tol > 0.0)) throw invalid_input("tolerance must be > 0");

    if (target == CriticalTarget::revenue) {
        auto lemma = check_lemma_preconditions(curve, scores, l);
        if (!lemma.lower_slot_loss_applies) {
            std::string why = (l < 2) ? "forked slot must be l >= 2"
                                      : "score separation (j-1) s_j >= j s_{j+1} fails at j = " +
                                            std::to_string(lemma.separation_failures.front());
            throw invalid_input("revenue is not monotone in f here: " + why);
        }
    }

    const double base = (target == CriticalTarget::revenue) ? revenue_min_sne(curve, scores)
                                                            : efficiency(curve, scores);
    auto gap = [&](double f) {
        MergedCurve merged = fork(curve, ForkSpec{l, L, f}, TiePolicy::prefer_original);
        double v = (target == CriticalTarget::revenue) ? revenue_after_fork(merged, scores)
                                                       : efficiency_after_fork(merged, scores);
        return v - base;
    };

    double lo = f_lo, hi = f_hi;
    double g_lo = gap(lo), g_hi = gap(hi);
    if (g_lo == 0.0) return lo;
    if (g_hi == 0.0) return hi;
    if ((g_lo > 0.0) == (g_hi > 0.0)) return std::nullopt;
    while (hi - lo > tol) {
        double mid = 0.5 * (lo + hi);
        double g_mid = gap(mid);
        if (g_mid == 0.0) return mid;
        if ((g_mid > 0.0) == (g_lo > 0.0)) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// A ready-to-run fork scenario: curve, fork parameters, bidder scores.
struct ForkInstance {
    SlotCurve curve;
    ForkSpec spec;
    std::vector<double> scores;
};

/// Geometric-curve instance forking the last slot, built so the revenue
/// condition holds for every f in (0, 1): the deep scores are chosen with
/// j s_{j+1} = (j-1) s_j past position K (the weakest admissible choice)
/// and (K-1) s_K > K s_{K+1} strictly.
inline ForkInstance make_example1(std::size_t K, double ratio, double f, std::size_t L,
                                  std::vector<double> score_overrides = {}) {
    if (K < 2) throw invalid_input("need K >= 2");
    if (!(ratio > 0.0) || !(ratio < 1.0)) throw invalid_input("CTR ratio must lie in (0, 1)");
    if (L < 1) throw invalid_input("need L >= 1");
    if (L > K) throw invalid_input("need L <= K so every sub-slot keeps positive weight");
    if (!(f > 0.0) || !(f < 1.0)) throw invalid_input("fitness must lie in (0, 1) when gamma_1 = 1");

    std::vector<double> gammas;
    double g = 1.0;
    for (std::size_t j = 0; j < K; ++j, g *= ratio) gammas.push_back(g);

    std::vector<double> s;
    if (!score_overrides.empty()) {
        s = std::move(score_overrides);
        if (s.size() != K + L) throw invalid_input("score overrides must list K + L values");
    } else {
        double v = 24.0;
        for (std::size_t j = 0; j < K; ++j, v *= 2.0 / 3.0) s.push_back(v);
        s.push_back(0.9 * static_cast<double>(K - 1) / static_cast<double>(K) * s[K - 1]);
        for (std::size_t j = K + 1; j + 1 <= K + L; ++j)
            s.push_back(s.back() * static_cast<double>(j - 1) / static_cast<double>(j));
    }
    for (std::size_t i = 1; i < s.size(); ++i)
        if (!(s[i] <= s[i - 1]))
            throw invalid_input("scores must be decreasing (violated at position " +
                                std::to_string(i + 1) + ")");
    if (!(static_cast<double>(K - 1) * s[K - 1] > static_cast<double>(K) * s[K]))
        throw invalid_input("premise (K-1) s_K > K s_{K+1} fails");
    for (std::size_t j = K + 1; j + 1 <= K + L; ++j) {
        if (static_cast<double>(j) * s[j] < static_cast<double>(j - 1) * s[j - 1] - kDefaultTol)
            throw invalid_input("premise j s_{j+1} >= (j-1) s_j fails at j = " + std::to_string(j));
    }
    return {SlotCurve(gammas), ForkSpec{K, L, f}, s};
}

/// Geometric-curve instance forking the last slot with geometric deep scores
/// s_{K+j} = alpha^j s_K. Its efficiency gain flips sign exactly at
/// f = (1 - alpha * ratio) / (1 - (alpha * ratio)^L), exposed as threshold.
struct Example2 {
    ForkInstance instance;
    double threshold = 0.0;
};

inline Example2 make_example2(std::size_t K, double ratio, double f, std::size_t L, double alpha) {
    if (K < 1) throw invalid_input("need K >= 1");
    if (!(ratio > 0.0) || !(ratio < 1.0)) throw invalid_input("CTR ratio must lie in (0, 1)");
    if (L < 1) throw invalid_input("need L >= 1");
    if (L > K) throw invalid_input("need L <= K so every sub-slot keeps positive weight");
    if (!(alpha > 0.0) || !(alpha < 1.0)) throw invalid_input("alpha must lie in (0, 1)");
    if (!(f > 0.0) || !(f < 1.0)) throw invalid_input("fitness must lie in (0, 1) when gamma_1 = 1");

    std::vector<double> gammas;
    double g = 1.0;
    for (std::size_t j = 0; j < K; ++j, g *= ratio) gammas.push_back(g);

    std::vector<double> s;
    double v = 12.0;
    for (std::size_t j = 0; j < K; ++j, v *= 0.7) s.push_back(v);
    for (std::size_t j = 1; j <= L; ++j) s.push_back(std::pow(alpha, static_cast<double>(j)) * s[K - 1]);

    Example2 ex;
    ex.instance = {SlotCurve(gammas), ForkSpec{K, L, f}, s};
    double ar = alpha * ratio;
    ex.threshold = (1.0 - ar) / (1.0 - std::pow(ar, static_cast<double>(L)));
    return ex;
}

}  // namespace adlab
