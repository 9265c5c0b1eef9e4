#ifndef RTFN_EVAL_HPP
#define RTFN_EVAL_HPP

#include <optional>
#include <string>
#include <vector>

#include "rtfn/tensor.hpp"

namespace rtfn {

struct ClusterAssignment {
    std::vector<int> labels;   // cluster id per sample
    Tensor centroids;          // k×F
    double inertia = 0.0;      // sum of squared distances to own centroid
};

// One Lloyd run from a k-means++ start; the inertia trace (one entry per
// iteration) is returned for the non-increase property.
struct KmeansRun {
    ClusterAssignment assignment;
    std::vector<double> inertia_trace;
};

KmeansRun kmeans_single(const Tensor& points, int k, std::uint64_t seed);

// Best-inertia result over `restarts` independently seeded runs. Lloyd
// iterations stop at an assignment fixpoint or after 300 rounds; empty
// clusters are re-seeded from the farthest point.
ClusterAssignment kmeans_fit(const Tensor& points, int k, int restarts, std::uint64_t seed);

// (PTP + NTP) / (s(s-1)/2): pairs co-clustered in both labelings plus pairs
// separated in both, over all pairs. Computed from the contingency table.
double rand_index(const std::vector<int>& pred, const std::vector<int>& truth);

double top1_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

// Published-results matrix: algorithms × datasets with optional cells.
class ResultsTable {
public:
    static ResultsTable from_csv(const std::string& path);

    const std::vector<std::string>& algorithms() const { return algorithms_; }
    const std::vector<std::string>& datasets() const { return datasets_; }
    std::optional<double> value(std::size_t dataset, std::size_t algorithm) const;
    std::optional<std::size_t> algorithm_index(const std::string& name) const;

private:
    std::vector<std::string> algorithms_;
    std::vector<std::string> datasets_;
    std::vector<std::vector<double>> cells_;  // NaN = missing
};

struct RankSummary {
    int win = 0, tie = 0, lose = 0, best = 0;
    int datasets = 0;       // datasets where the focus algorithm has a value
    double mean_value = 0;  // mean accuracy / RI of the focus column
    double avg_rank = 0;    // competition rank, ties share the average position
};

// Per dataset where the focus has a value: win if strictly greatest among the
// present values, tie if equal-greatest with at least one other, lose
// otherwise; best = win + tie. Equality uses tolerance 1e-9.
RankSummary rank_table(const ResultsTable& table, const std::string& focus);

}  // namespace rtfn

#endif
