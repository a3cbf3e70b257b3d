#pragma once

// Scenario file schema (JSON) and the tabular output format shared by the
// command line tools. Field names here are an external contract.

#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "capacity.hpp"
#include "core.hpp"
#include "mediator.hpp"

namespace adlab {

/// In-memory form of a scenario file:
/// {
///   "gammas":   [1.0, 0.6, ...],
///   "bidders":  [{"id": 1, "value": 26.0, "relevance": 1.0}, ...],
///   "bids":     [{"id": 1, "bid": 25.0}, ...],            optional
///   "reserve":  0.0,                                      optional
///   "fork":     {"l": 8, "L": 3, "f": 0.5},               optional
///   "mediator": {"m_ids": [1, 2], "share": 0.5,
///                "strategy": "top"}                       optional
/// }
struct Scenario {
    SlotCurve curve;
    std::vector<Bidder> bidders;
    std::optional<std::vector<Bid>> bids;
    double reserve = 0.0;
    std::optional<ForkSpec> fork;

    struct MediatorSection {
        std::set<BidderId> m_ids;
        double share = 0.5;
        std::string strategy = "top";
    };
    std::optional<MediatorSection> mediator;

    /// Bidders in allocation (score) order.
    std::vector<Bidder> ranked_bidders() const { return by_score_desc(bidders); }

    std::vector<double> ranked_scores() const { return scores_of(ranked_bidders()); }

    /// The standing profile: the listed bids when present (tie_rank by list
    /// position), otherwise the minimum-SNE profile.
    BidProfile profile() const {
        if (bids) return BidProfile::from_bids(bidders, *bids);
        return min_sne_bids(curve, ranked_bidders());
    }

    BidProfile required_profile() const {
        if (!bids) throw invalid_input("scenario field missing: bids");
        return BidProfile::from_bids(bidders, *bids);
    }
};

namespace detail {

inline double require_number(const nlohmann::json& j, const std::string& field) {
    if (!j.contains(field) || !j[field].is_number())
        throw invalid_input("scenario field missing or not a number: " + field);
    return j[field].get<double>();
}

inline long long require_integer(const nlohmann::json& j, const std::string& field) {
    if (!j.contains(field) || !j[field].is_number_integer())
        throw invalid_input("scenario field missing or not an integer: " + field);
    return j[field].get<long long>();
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
    Scenario s;
    if (!j.contains("gammas") || !j["gammas"].is_array() || j["gammas"].empty())
        throw invalid_input("scenario field missing or not a non-empty array: gammas");
    std::vector<double> gammas;
    for (const auto& g : j["gammas"]) {
        if (!g.is_number()) throw invalid_input("gammas entries must be numbers");
        gammas.push_back(g.get<double>());
    }
    s.curve = SlotCurve(gammas);

    if (!j.contains("bidders") || !j["bidders"].is_array() || j["bidders"].empty())
        throw invalid_input("scenario field missing or not a non-empty array: bidders");
    for (const auto& b : j["bidders"]) {
        Bidder bd;
        bd.id = static_cast<BidderId>(detail::require_integer(b, "id"));
        bd.value = detail::require_number(b, "value");
        bd.relevance = b.contains("relevance") ? detail::require_number(b, "relevance") : 1.0;
        s.bidders.push_back(bd);
    }
    validate_bidders(s.bidders);

    if (j.contains("bids")) {
        if (!j["bids"].is_array()) throw invalid_input("scenario field not an array: bids");
        std::vector<Bid> bids;
        int pos = 0;
        for (const auto& b : j["bids"]) {
            Bid bid;
            bid.id = static_cast<BidderId>(detail::require_integer(b, "id"));
            bid.bid = detail::require_number(b, "bid");
            bid.tie_rank = ++pos;
            bids.push_back(bid);
        }
        s.bids = std::move(bids);
    }

    if (j.contains("reserve")) {
        s.reserve = detail::require_number(j, "reserve");
        if (!(s.reserve >= 0.0)) throw invalid_input("reserve must be >= 0");
    }

    if (j.contains("fork")) {
        const auto& f = j["fork"];
        ForkSpec spec;
        long long l = detail::require_integer(f, "l");
        long long L = detail::require_integer(f, "L");
        if (l < 1 || L < 1) throw invalid_input("fork.l and fork.L must be >= 1");
        spec.l = static_cast<std::size_t>(l);
        spec.L = static_cast<std::size_t>(L);
        spec.f = detail::require_number(f, "f");
        validate_fork(s.curve, spec);
        s.fork = spec;
    }

    if (j.contains("mediator")) {
        const auto& m = j["mediator"];
        Scenario::MediatorSection sec;
        if (!m.contains("m_ids") || !m["m_ids"].is_array() || m["m_ids"].empty())
            throw invalid_input("scenario field missing or not a non-empty array: mediator.m_ids");
        for (const auto& id : m["m_ids"]) {
            if (!id.is_number_integer()) throw invalid_input("mediator.m_ids entries must be integers");
            BidderId b = id.get<BidderId>();
            bidder_by_id(s.bidders, b);
            sec.m_ids.insert(b);
        }
        sec.share = detail::require_number(m, "share");
        if (!(sec.share > 0.0) || !(sec.share < 1.0))
            throw invalid_input("mediator.share must lie strictly inside (0, 1)");
        if (m.contains("strategy")) {
            if (!m["strategy"].is_string())
                throw invalid_input("scenario field not a string: mediator.strategy");
            sec.strategy = m["strategy"].get<std::string>();
            if (sec.strategy != "top" && sec.strategy != "interior" && sec.strategy != "nonsym" &&
                sec.strategy != "slide")
                throw invalid_input("mediator.strategy must be top, interior, nonsym or slide");
        }
        s.mediator = std::move(sec);
    }
    return s;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cannot open scenario file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw invalid_input(path + ": " + e.what());
    }
    return parse_scenario(j);
}

/// %.6g rendering by default; exact mode prints a round-trippable 17-digit
/// form. Both are locale independent, which keeps CSV output byte stable.
inline std::string format_number(double v, bool exact = false) {
    char buf[64];
    std::snprintf(buf, sizeof buf, exact ? "%.17g" : "%.6g", v);
    return buf;
}

/// A small column-ordered table with typed cells, rendered as CSV (header
/// row, LF line endings).
class ResultTable {
public:
    using Cell = std::variant<double, long long, bool, std::string>;

    explicit ResultTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add_row(std::vector<Cell> row) {
        if (row.size() != columns_.size()) throw invalid_input("row width does not match header");
        rows_.push_back(std::move(row));
    }

    void write_csv(std::ostream& os, bool exact = false) const {
        for (std::size_t c = 0; c < columns_.size(); ++c)
            os << (c ? "," : "") << columns_[c];
        os << "\n";
        for (const auto& row : rows_) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (c) os << ",";
                const Cell& cell = row[c];
                if (std::holds_alternative<double>(cell))
                    os << format_number(std::get<double>(cell), exact);
                else if (std::holds_alternative<long long>(cell))
                    os << std::get<long long>(cell);
                else if (std::holds_alternative<bool>(cell))
                    os << (std::get<bool>(cell) ? "true" : "false");
                else
                    os << std::get<std::string>(cell);
            }
            os << "\n";
        }
    }

    const std::vector<std::string>& columns() const { return columns_; }
    std::size_t rows() const { return rows_.size(); }

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<Cell>> rows_;
};

}  // namespace adlab
