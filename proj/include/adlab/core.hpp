#pragma once

// Core value types for position auctions: slot curves, bidders, bid profiles.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace adlab {

/// Thrown on invalid inputs (bad curves, malformed profiles, out-of-range
/// parameters). Carries a human-readable message naming the offending field.
struct invalid_input : std::runtime_error {
    explicit invalid_input(const std::string& what) : std::runtime_error(what) {}
};

/// Default comparison tolerance for incentive checks and acceptance tests.
inline constexpr double kDefaultTol = 1e-9;

/// Tolerance used by the CLI: ADLAB_TOL environment variable if set and
/// parseable, kDefaultTol otherwise.
inline double env_tolerance() {
    if (const char* s = std::getenv("ADLAB_TOL")) {
        char* end = nullptr;
        double v = std::strtod(s, &end);
        if (end != s && std::isfinite(v) && v >= 0.0) return v;
    }
    return kDefaultTol;
}

using BidderId = int;

/// An advertiser. score() is the ranking weight e_i * v_i; it is always
/// recomputed from value and relevance, never cached.
struct Bidder {
    BidderId id = 0;
    double value = 0.0;      // private value per click, v_i >= 0
    double relevance = 1.0;  // click-through multiplier e_i in (0, 1]

    double score() const { return relevance * value; }
};

inline void validate_bidders(const std::vector<Bidder>& bidders) {
    std::vector<BidderId> seen;
    for (const auto& b : bidders) {
        if (!(b.value >= 0.0) || !std::isfinite(b.value))
            throw invalid_input("bidder " + std::to_string(b.id) + ": value must be finite and >= 0");
        if (!(b.relevance > 0.0) || b.relevance > 1.0)
            throw invalid_input("bidder " + std::to_string(b.id) + ": relevance must lie in (0, 1]");
        seen.push_back(b.id);
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
        throw invalid_input("duplicate bidder id");
}

/// Click-through curve of a slate of ad positions. Strictly decreasing,
/// every entry in (0, 1]. gamma(j) is 1-based and returns 0 past the last
/// slot, which keeps sums over "position K+1" well defined.
class SlotCurve {
public:
    SlotCurve() = default;

    explicit SlotCurve(std::vector<double> gammas) : gammas_(std::move(gammas)) {
        for (std::size_t i = 0; i < gammas_.size(); ++i) {
            if (!(gammas_[i] > 0.0) || gammas_[i] > 1.0)
                throw invalid_input("gamma[" + std::to_string(i + 1) + "] must lie in (0, 1]");
            if (i > 0 && !(gammas_[i] < gammas_[i - 1]))
                throw invalid_input("gammas must be strictly decreasing (violated at position " +
                                    std::to_string(i + 1) + ")");
        }
    }

    std::size_t slots() const { return gammas_.size(); }

    double gamma(std::size_t j) const {  // 1-based
        return (j >= 1 && j <= gammas_.size()) ? gammas_[j - 1] : 0.0;
    }

    const std::vector<double>& values() const { return gammas_; }

private:
    std::vector<double> gammas_;
};

/// Total click capacity of a curve: the sum of its CTRs.
inline double capacity(const SlotCurve& curve) {
    double c = 0.0;
    for (double g : curve.values()) c += g;
    return c;
}

/// One standing bid. tie_rank breaks exact score ties deterministically
/// (lower wins); it replaces the epsilon orderings used in flattened-bid
/// constructions, so equal scores never need perturbation.
struct Bid {
    BidderId id = 0;
    double bid = 0.0;
    int tie_rank = 0;
};

/// A complete bid profile, one entry per bidder. Entries are held ranked:
/// score r_i = e_i * b_i descending, tie_rank ascending among equal scores.
/// Mediator plans construct profiles from target scores directly so that
/// flattened blocks tie exactly; the per-click bid is then score / e_i.
class BidProfile {
public:
    struct Entry {
        BidderId id = 0;
        double bid = 0.0;    // per-click bid b_i
        double score = 0.0;  // ranking score r_i = e_i * b_i
        int tie_rank = 0;
    };

    BidProfile() = default;

    /// Builds from per-click bids. Requires exactly one bid per bidder.
    static BidProfile from_bids(const std::vector<Bidder>& bidders, const std::vector<Bid>& bids) {
        BidProfile p;
        if (bids.size() != bidders.size())
            throw invalid_input("profile must contain exactly one bid per bidder");
        for (const auto& b : bids) {
            const Bidder* owner = find(bidders, b.id);
            if (!owner) throw invalid_input("unknown bidder id in profile: " + std::to_string(b.id));
            if (!(b.bid >= 0.0) || !std::isfinite(b.bid))
                throw invalid_input("bidder " + std::to_string(b.id) + ": bid must be finite and >= 0");
            p.entries_.push_back({b.id, b.bid, owner->relevance * b.bid, b.tie_rank});
        }
        p.sort_entries();
        return p;
    }

    /// Builds from ranking scores (bid derived as score / e_i). Used where
    /// exact score ties are intended.
    struct ScoredBid {
        BidderId id = 0;
        double score = 0.0;
        int tie_rank = 0;
    };
    static BidProfile from_scores(const std::vector<Bidder>& bidders,
                                  const std::vector<ScoredBid>& scored) {
        BidProfile p;
        if (scored.size() != bidders.size())
            throw invalid_input("profile must contain exactly one bid per bidder");
        for (const auto& sb : scored) {
            const Bidder* owner = find(bidders, sb.id);
            if (!owner) throw invalid_input("unknown bidder id in profile: " + std::to_string(sb.id));
            if (!(sb.score >= 0.0) || !std::isfinite(sb.score))
                throw invalid_input("bidder " + std::to_string(sb.id) + ": score must be finite and >= 0");
            p.entries_.push_back({sb.id, sb.score / owner->relevance, sb.score, sb.tie_rank});
        }
        p.sort_entries();
        return p;
    }

    std::size_t size() const { return entries_.size(); }

    /// Entry at rank i (1-based, rank 1 = highest score).
    const Entry& at_rank(std::size_t i) const {
        if (i < 1 || i > entries_.size()) throw invalid_input("rank out of range");
        return entries_[i - 1];
    }

    /// Ranking score at rank i; 0 past the last entry (the "next bid" of the
    /// bottom bidder when nobody is below).
    double score_at(std::size_t i) const {
        return (i >= 1 && i <= entries_.size()) ? entries_[i - 1].score : 0.0;
    }

    std::optional<std::size_t> rank_of(BidderId id) const {
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].id == id) return i + 1;
        return std::nullopt;
    }

    const std::vector<Entry>& entries() const { return entries_; }

private:
    static const Bidder* find(const std::vector<Bidder>& bidders, BidderId id) {
        for (const auto& b : bidders)
            if (b.id == id) return &b;
        return nullptr;
    }

    void sort_entries() {
        std::stable_sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.tie_rank < b.tie_rank;
        });
        for (std::size_t i = 1; i < entries_.size(); ++i) {
            if (entries_[i].score == entries_[i - 1].score &&
                entries_[i].tie_rank == entries_[i - 1].tie_rank)
                throw invalid_input("tied scores with equal tie_rank between bidders " +
                                    std::to_string(entries_[i - 1].id) + " and " +
                                    std::to_string(entries_[i].id));
        }
    }

    std::vector<Entry> entries_;
};

inline const Bidder& bidder_by_id(const std::vector<Bidder>& bidders, BidderId id) {
    for (const auto& b : bidders)
        if (b.id == id) return b;
    throw invalid_input("unknown bidder id: " + std::to_string(id));
}

/// Bidders listed by decreasing score; ties broken by id for determinism.
inline std::vector<Bidder> by_score_desc(std::vector<Bidder> bidders) {
    std::stable_sort(bidders.begin(), bidders.end(), [](const Bidder& a, const Bidder& b) {
        if (a.score() != b.score()) return a.score() > b.score();
        return a.id < b.id;
    });
    return bidders;
}

/// Scores s_1 >= s_2 >= ... of bidders already in allocation order.
inline std::vector<double> scores_of(const std::vector<Bidder>& bidders_in_order) {
    std::vector<double> s;
    s.reserve(bidders_in_order.size());
    for (const auto& b : bidders_in_order) s.push_back(b.score());
    return s;
}

}  // namespace adlab
