// adlab: position-auction scenarios from the command line.
//
// Subcommands operate on a scenario JSON file (see include/adlab/scenario.hpp
// for the schema) and print CSV to stdout. Exit codes: 0 success, 1 negative
// domain result (equilibrium violated, nothing to mediate, reproduction
// mismatch), 2 bad input.

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <adlab/adlab.hpp>

namespace {

using namespace adlab;

struct GlobalOpts {
    bool exact = false;
    std::string output;
    double tol = env_tolerance();
};

void emit(const GlobalOpts& g, const ResultTable& table, const ResultTable* detail = nullptr) {
    std::ostringstream buf;
    table.write_csv(buf, g.exact);
    if (detail) {
        buf << "\n";
        detail->write_csv(buf, g.exact);
    }
    if (g.output.empty()) {
        std::cout << buf.str();
    } else {
        std::ofstream out(g.output, std::ios::binary);
        if (!out) throw invalid_input("cannot open output file: " + g.output);
        out << buf.str();
    }
}

// ---------------------------------------------------------------------------
// verify-sne

int cmd_verify(const GlobalOpts& g, const std::string& path) {
    Scenario sc = load_scenario(path);
    BidProfile profile = sc.required_profile();
    auto rows = sne_adjacent_report(sc.curve, sc.bidders, profile, g.tol, sc.reserve);
    auto full = verify_sne(sc.curve, sc.bidders, profile, g.tol, sc.reserve);

    ResultTable table({"rank", "bidder", "score", "payoff", "payoff_up", "payoff_down", "ok"});
    for (const auto& r : rows) {
        table.add_row({static_cast<long long>(r.rank), static_cast<long long>(r.id),
                       profile.score_at(r.rank), r.payoff,
                       r.payoff_up ? ResultTable::Cell(*r.payoff_up) : ResultTable::Cell(std::string()),
                       r.payoff_down ? ResultTable::Cell(*r.payoff_down)
                                     : ResultTable::Cell(std::string()),
                       r.satisfied});
    }
    emit(g, table);
    for (const auto& v : full.violations)
        std::cerr << "violation: rank " << v.rank << " (bidder " << v.id << ") gains "
                  << format_number(v.gain) << " at position " << v.target_position << "\n";
    return full.is_sne ? 0 : 1;
}

// ---------------------------------------------------------------------------
// min-sne / revenue / efficiency

int cmd_min_sne(const GlobalOpts& g, const std::string& path) {
    Scenario sc = load_scenario(path);
    auto ranked = sc.ranked_bidders();
    BidProfile profile = min_sne_bids(sc.curve, ranked);
    ResultTable table({"rank", "bidder", "score", "min_score", "min_bid"});
    for (std::size_t i = 1; i <= profile.size(); ++i) {
        const auto& e = profile.at_rank(i);
        table.add_row({static_cast<long long>(i), static_cast<long long>(e.id),
                       bidder_by_id(ranked, e.id).score(), e.score, e.bid});
    }
    emit(g, table);
    return 0;
}

int cmd_revenue(const GlobalOpts& g, const std::string& path) {
    Scenario sc = load_scenario(path);
    auto ranked = sc.ranked_bidders();
    double direct = revenue_min_sne(sc.curve, ranked);

    BidProfile profile = min_sne_bids(sc.curve, ranked);
    double via_prices = 0.0;
    for (std::size_t i = 1; i <= std::min(sc.curve.slots(), profile.size()); ++i)
        via_prices += sc.curve.gamma(i) * ((i < profile.size()) ? profile.score_at(i + 1) : 0.0);

    ResultTable table({"revenue", "revenue_via_prices"});
    table.add_row({direct, via_prices});
    emit(g, table);
    if (std::abs(direct - via_prices) > g.tol) {
        std::cerr << "revenue paths disagree by " << format_number(direct - via_prices) << "\n";
        return 1;
    }
    return 0;
}

int cmd_efficiency(const GlobalOpts& g, const std::string& path) {
    Scenario sc = load_scenario(path);
    ResultTable table({"efficiency"});
    table.add_row({efficiency(sc.curve, sc.ranked_bidders())});
    emit(g, table);
    return 0;
}

// ---------------------------------------------------------------------------
// capacity-sweep

int cmd_sweep(const GlobalOpts& g, const std::string& path, long long l_opt, long long L_opt,
              double f_min, double f_max, long long steps, bool tie_break) {
    Scenario sc = load_scenario(path);
    std::size_t l = 0, L = 0;
    if (l_opt > 0) l = static_cast<std::size_t>(l_opt);
    else if (sc.fork) l = sc.fork->l;
    else throw invalid_input("no fork slot: give --l or a fork section in the scenario");
    if (L_opt > 0) L = static_cast<std::size_t>(L_opt);
    else if (sc.fork) L = sc.fork->L;
    else throw invalid_input("no sub-slot count: give --L or a fork section in the scenario");

    std::vector<double> grid;
    if (steps <= 0) throw invalid_input("--steps must be >= 1");
    if (std::isnan(f_min) || std::isnan(f_max)) {
        if (!sc.fork) throw invalid_input("no fitness grid: give --f-min/--f-max or a fork section");
        grid.push_back(sc.fork->f);
    } else if (steps == 1) {
        grid.push_back(f_min);
    } else {
        if (!(f_max > f_min)) throw invalid_input("need --f-max > --f-min");
        for (long long i = 0; i < steps; ++i)
            grid.push_back(f_min + (f_max - f_min) * static_cast<double>(i) /
                                       static_cast<double>(steps - 1));
    }

    auto result = sweep_fitness(sc.curve, sc.ranked_scores(), l, L, grid,
                                tie_break ? TiePolicy::prefer_original : TiePolicy::error);
    ResultTable table({"f", "capacity", "revenue", "efficiency", "value_of_capacity", "eta", "beta",
                       "thm_rev1", "thm_eff1"});
    for (const auto& row : result.rows)
        table.add_row({row.f, row.capacity, row.revenue, row.efficiency, row.value_of_capacity,
                       row.eta, row.beta, row.thm_rev1, row.thm_eff1});
    emit(g, table);
    for (const auto& [f, why] : result.skipped)
        std::cerr << "skipped f = " << format_number(f) << ": " << why << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// mediator

int cmd_mediator(const GlobalOpts& g, const std::string& path, std::string strategy,
                 std::vector<long long> m_ids_opt, long long L_flag, long long anchor_flag,
                 double share_opt) {
    Scenario sc = load_scenario(path);

    std::set<BidderId> m_ids;
    double share = 0.5;
    if (!m_ids_opt.empty()) {
        for (long long id : m_ids_opt) m_ids.insert(static_cast<BidderId>(id));
        share = (share_opt > 0.0) ? share_opt : 0.5;
    } else if (L_flag > 0) {
        // Coalition by rank: the L standing bidders below the anchor.
        std::size_t anchor = anchor_flag > 0 ? static_cast<std::size_t>(anchor_flag) : 0;
        BidProfile standing = sc.required_profile();
        if (anchor + static_cast<std::size_t>(L_flag) > standing.size())
            throw invalid_input("coalition ranks " + std::to_string(anchor + 1) + ".." +
                                std::to_string(anchor + static_cast<std::size_t>(L_flag)) +
                                " run past the " + std::to_string(standing.size()) +
                                " standing bidders");
        for (std::size_t r = anchor + 1; r <= anchor + static_cast<std::size_t>(L_flag); ++r)
            m_ids.insert(standing.at_rank(r).id);
        share = (share_opt > 0.0) ? share_opt
                                  : (sc.mediator ? sc.mediator->share : 0.5);
    } else if (sc.mediator) {
        m_ids = sc.mediator->m_ids;
        share = (share_opt > 0.0) ? share_opt : sc.mediator->share;
    } else {
        throw invalid_input(
            "no coalition: give --m-ids, --L, or a mediator section in the scenario");
    }
    if (strategy.empty()) strategy = sc.mediator ? sc.mediator->strategy : "top";

    MediatorScenario ms =
        make_scenario(sc.curve, sc.bidders, sc.required_profile(), m_ids, share, sc.reserve, g.tol);

    std::size_t L = m_ids.size();
    std::size_t min_rank = ms.base.size();
    for (BidderId id : m_ids) min_rank = std::min(min_rank, *ms.base.rank_of(id));

    PlanOutcome outcome;
    if (strategy == "top") outcome = plan_top(ms, L);
    else if (strategy == "interior") outcome = plan_interior(ms, min_rank - 1, L);
    else if (strategy == "nonsym") outcome = plan_nonsym(ms, L);
    else if (strategy == "slide") outcome = plan_slide(ms, L);
    else throw invalid_input("unknown strategy: " + strategy);

    ResultTable summary({"key", "value"});
    summary.add_row({std::string("strategy"), strategy});
    summary.add_row({std::string("status"),
                     std::string(outcome.improved() ? "plan" : "no_improvement")});
    summary.add_row({std::string("r_star"), outcome.r_star});
    if (!outcome.improved()) {
        summary.add_row({std::string("reason"), outcome.no_improvement});
        emit(g, summary);
        return 1;
    }

    const MediatorPlan& plan = *outcome;
    summary.add_row({std::string("flat_score"), plan.flat_score});
    summary.add_row({std::string("flat_ranks"),
                     std::to_string(plan.flat_lo) + ".." + std::to_string(plan.flat_hi)});
    summary.add_row({std::string("payoff_per_share"), plan.payoff_per_share});
    summary.add_row({std::string("mediator_share"), plan.share});
    summary.add_row({std::string("keeps_positions"), plan.keeps_positions});
    summary.add_row({std::string("i_verified"), plan.i_verified});

    Allocation before = allocate(ms.curve, ms.bidders, ms.base, ms.reserve);
    Allocation after = allocate(ms.curve, ms.bidders, plan.modified, ms.reserve);
    ResultTable detail({"rank", "bidder", "member", "score", "price_score", "price_per_click",
                        "base_price_score", "saving_per_click"});
    for (std::size_t i = 1; i <= plan.modified.size(); ++i) {
        const auto& e = plan.modified.at_rank(i);
        const auto* a = after.slot_of(e.id);
        const auto* b = before.slot_of(e.id);
        bool member = ms.m_ids.count(e.id) > 0;
        detail.add_row({static_cast<long long>(i), static_cast<long long>(e.id), member, e.score,
                        a ? a->price_score : 0.0, a ? a->price_per_click : 0.0,
                        b ? b->price_score : 0.0,
                        member ? plan.saving_per_click.at(e.id) : 0.0});
    }
    emit(g, summary, &detail);
    return 0;
}

// ---------------------------------------------------------------------------
// reproduce

Scenario reference_scenario() {
    Scenario s;
    s.curve = SlotCurve({1.0, 0.6, 0.5, 0.4, 0.3, 0.2, 0.15, 0.10});
    const double values[] = {26, 22, 20, 18, 17, 15, 12, 12, 9};
    const double bids[] = {25, 20, 16, 15, 14, 13, 11, 10, 9};
    std::vector<Bid> bs;
    for (int i = 0; i < 9; ++i) {
        s.bidders.push_back({i + 1, values[i], 1.0});
        bs.push_back({i + 1, bids[i], i + 1});
    }
    s.bids = bs;
    s.mediator = Scenario::MediatorSection{{1, 2, 3, 4, 5}, 0.5, "top"};
    return s;
}

struct Reproduction {
    ResultTable table{{"name", "expected", "actual", "ok"}};
    bool all_ok = true;

    void number(const std::string& name, double expected, double actual, double tol) {
        bool ok = std::abs(expected - actual) <= tol;
        all_ok = all_ok && ok;
        table.add_row({name, format_number(expected), format_number(actual), ok});
    }
    void flag(const std::string& name, bool expected, bool actual) {
        bool ok = expected == actual;
        all_ok = all_ok && ok;
        table.add_row({name, std::string(expected ? "true" : "false"),
                       std::string(actual ? "true" : "false"), ok});
    }
};

int cmd_reproduce(const GlobalOpts& g, const std::string& target) {
    Scenario sc = reference_scenario();
    Reproduction rep;
    const double tol = g.tol;

    if (target == "table1") {
        Allocation alloc = allocate(sc.curve, sc.bidders, sc.required_profile());
        const double expected_prices[] = {20, 16, 15, 14, 13, 11, 10, 9};
        for (std::size_t i = 0; i < 8; ++i)
            rep.number("price_score_rank_" + std::to_string(i + 1), expected_prices[i],
                       alloc.slots[i].price_score, tol);
        MediatorScenario ms = make_scenario(sc.curve, sc.bidders, sc.required_profile(),
                                            sc.mediator->m_ids, sc.mediator->share);
        PlanOutcome plan = plan_top(ms, 5);
        rep.flag("top_plan_found", true, plan.improved());
        if (plan.improved()) {
            const double expected_scores[] = {14.2, 14.2, 14.2, 14.2, 14};
            const double expected_new_prices[] = {14.2, 14.2, 14.2, 14, 13};
            Allocation after = allocate(ms.curve, ms.bidders, plan->modified);
            for (std::size_t i = 0; i < 5; ++i) {
                rep.number("modified_score_rank_" + std::to_string(i + 1), expected_scores[i],
                           plan->modified.score_at(i + 1), tol);
                rep.number("modified_price_score_rank_" + std::to_string(i + 1),
                           expected_new_prices[i], after.slots[i].price_score, tol);
            }
        }
    } else if (target == "table2") {
        auto rows = sne_adjacent_report(sc.curve, sc.bidders, sc.required_profile(), tol);
        const double payoff[] = {6, 3.6, 2.5, 1.6, 1.2, 0.8, 0.3, 0.3, 0};
        const double up[] = {0, 2, 2.4, 1.5, 1.2, 0.6, 0.2, 0.3, 0};
        const double down[] = {6, 3.5, 2.4, 1.5, 1.2, 0.75, 0.3, 0, 0};
        for (std::size_t j = 0; j < 9; ++j) {
            rep.number("payoff_rank_" + std::to_string(j + 1), payoff[j], rows[j].payoff, tol);
            if (j > 0)
                rep.number("payoff_up_rank_" + std::to_string(j + 1), up[j],
                           rows[j].payoff_up.value_or(-1), tol);
            rep.number("payoff_down_rank_" + std::to_string(j + 1), down[j],
                       rows[j].payoff_down.value_or(-1), tol);
            rep.flag("satisfied_rank_" + std::to_string(j + 1), true, rows[j].satisfied);
        }
    } else if (target == "table3") {
        MediatorScenario ms = make_scenario(sc.curve, sc.bidders, sc.required_profile(),
                                            sc.mediator->m_ids, sc.mediator->share);
        RStar rs = r_star_top(ms, 5);
        const double xs[] = {14.2, 11.7, 11.7, 9};
        for (std::size_t i = 0; i < rs.thresholds.size(); ++i)
            rep.number("x_rank_" + std::to_string(rs.thresholds[i].rank), xs[i],
                       rs.thresholds[i].x, tol);
        rep.number("r_star", 14.2, rs.value, tol);
        PlanOutcome plan = plan_top(ms, 5);
        rep.flag("top_plan_found", true, plan.improved());
        if (plan.improved()) {
            rep.number("flatten_depth", 4, static_cast<double>(plan->flat_hi), 0);
            rep.number("payoff_per_share", 7.28, plan->payoff_per_share, tol);
        }
    } else if (target == "table4") {
        MediatorScenario ms = make_scenario(sc.curve, sc.bidders, sc.required_profile(),
                                            sc.mediator->m_ids, sc.mediator->share);
        PlanOutcome plan = plan_slide(ms, 5);
        rep.flag("slide_plan_found", true, plan.improved());
        if (plan.improved()) {
            rep.number("flat_score", 12, plan->flat_score, tol);
            rep.number("payoff_per_share", 22.8, plan->payoff_per_share, tol);
            rep.number("position_1_bidder", 6,
                       static_cast<double>(plan->modified.at_rank(1).id), 0);
            Allocation after = allocate(ms.curve, ms.bidders, plan->modified);
            const double expected_prices[] = {12, 12, 12, 12, 11};
            for (std::size_t i = 2; i <= 6; ++i)
                rep.number("price_score_rank_" + std::to_string(i), expected_prices[i - 2],
                           after.slots[i - 1].price_score, tol);
            rep.flag("i_verified", true, plan->i_verified);
        }
    } else if (target == "example1") {
        ForkInstance inst = make_example1(4, 0.5, 0.7, 3);
        MergedCurve merged = fork(inst.curve, inst.spec);
        auto rev1 = check_theorem_rev1(inst.curve, merged, inst.scores);
        rep.flag("revenue_condition_holds", true, rev1.holds);
        double r0 = revenue_min_sne(inst.curve, inst.scores);
        double voc = value_of_capacity(revenue_after_fork(merged, inst.scores), r0);
        rep.flag("value_of_capacity_positive", true, voc > 0.0);
        rep.number("eta_closed_form", inst.spec.f * (1.0 - 0.5), eta(inst.curve, merged), tol);
    } else if (target == "example2") {
        Example2 ex = make_example2(3, 0.5, 0.8, 3, 0.5);
        auto found = critical_fitness(ex.instance.curve, ex.instance.scores, ex.instance.spec.l,
                                      ex.instance.spec.L, CriticalTarget::efficiency, 0.05, 0.95,
                                      1e-7);
        rep.flag("break_even_found", true, found.has_value());
        if (found) rep.number("break_even_fitness", ex.threshold, *found, 1e-6);
        auto below = check_theorem_eff1(
            ex.instance.curve,
            fork(ex.instance.curve, ForkSpec{ex.instance.spec.l, ex.instance.spec.L,
                                             ex.threshold - 1e-4}),
            ex.instance.scores);
        auto above = check_theorem_eff1(
            ex.instance.curve,
            fork(ex.instance.curve, ForkSpec{ex.instance.spec.l, ex.instance.spec.L,
                                             ex.threshold + 1e-4}),
            ex.instance.scores);
        rep.flag("condition_below_threshold", false, below.holds);
        rep.flag("condition_above_threshold", true, above.holds);
    } else {
        throw invalid_input("unknown target: " + target +
                            " (expected table1|table2|table3|table4|example1|example2)");
    }

    emit(g, rep.table);
    return rep.all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"position auction toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // --exact/-o/--tol may follow the subcommand

    GlobalOpts g;
    app.add_flag("--exact", g.exact, "print full-precision numbers");
    app.add_option("-o,--output", g.output, "write CSV to a file instead of stdout");
    app.add_option("--tol", g.tol, "comparison tolerance (default: ADLAB_TOL or 1e-9)");

    std::string path, strategy, target;
    long long l_opt = 0, L_opt = 0, anchor_opt = 0, steps = 25;
    double f_min = std::nan(""), f_max = std::nan(""), share_opt = 0.0;
    bool tie_break = false;
    std::vector<long long> m_ids_opt;

    auto* verify = app.add_subcommand("verify-sne", "check a bid profile for equilibrium");
    verify->add_option("scenario", path, "scenario JSON file")->required();

    auto* minsne = app.add_subcommand("min-sne", "lowest equilibrium bids");
    minsne->add_option("scenario", path, "scenario JSON file")->required();

    auto* revenue = app.add_subcommand("revenue", "per-impression revenue at the lowest equilibrium");
    revenue->add_option("scenario", path, "scenario JSON file")->required();

    auto* eff = app.add_subcommand("efficiency", "allocative efficiency of the score ranking");
    eff->add_option("scenario", path, "scenario JSON file")->required();

    auto* sweep = app.add_subcommand("capacity-sweep", "fork a slot across a fitness grid");
    sweep->add_option("scenario", path, "scenario JSON file")->required();
    sweep->add_option("--l", l_opt, "slot to fork (default: scenario fork.l)");
    sweep->add_option("--L", L_opt, "sub-slot count (default: scenario fork.L)");
    sweep->add_option("--f-min", f_min, "low end of the fitness grid");
    sweep->add_option("--f-max", f_max, "high end of the fitness grid");
    sweep->add_option("--steps", steps, "grid points (default 25)");
    sweep->add_flag("--tie-break", tie_break, "rank originals before forked sub-slots on CTR ties");

    auto* mediator = app.add_subcommand("mediator", "price a coalition plan");
    mediator->add_option("scenario", path, "scenario JSON file")->required();
    mediator->add_option("--strategy", strategy, "top|interior|nonsym|slide");
    auto* med_ids = mediator->add_option("--m-ids", m_ids_opt,
                                         "coalition bidder ids (overrides scenario)");
    mediator->add_option("--L", L_opt, "coalition size: standing ranks anchor+1 .. anchor+L")
        ->excludes(med_ids);
    mediator->add_option("--anchor", anchor_opt, "ranks left above the coalition (default 0)")
        ->excludes(med_ids);
    mediator->add_option("--share", share_opt, "mediator share (overrides scenario)");

    auto* repro = app.add_subcommand("reproduce", "check the embedded reference instances");
    repro->add_option("--target", target, "table1|table2|table3|table4|example1|example2")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (verify->parsed()) return cmd_verify(g, path);
        if (minsne->parsed()) return cmd_min_sne(g, path);
        if (revenue->parsed()) return cmd_revenue(g, path);
        if (eff->parsed()) return cmd_efficiency(g, path);
        if (sweep->parsed()) return cmd_sweep(g, path, l_opt, L_opt, f_min, f_max, steps, tie_break);
        if (mediator->parsed())
            return cmd_mediator(g, path, strategy, m_ids_opt, L_opt, anchor_opt, share_opt);
        if (repro->parsed()) return cmd_reproduce(g, target);
    } catch (const invalid_input& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
