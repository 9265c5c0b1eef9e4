#include "rtfn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace rtfn {

namespace {

double sq_dist(const double* a, const double* b, int dim) {
    double s = 0.0;
    for (int d = 0; d < dim; ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

// D²-weighted k-means++ seeding.
std::vector<double> kmeanspp_init(const Tensor& points, int k, Rng& rng) {
    const int s = points.shape[0], dim = points.shape[1];
    std::vector<double> centroids(static_cast<std::size_t>(k) * dim);
    const int first = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(s)));
    std::copy_n(points.values.data() + static_cast<std::size_t>(first) * dim, dim,
                centroids.begin());

    std::vector<double> min_d2(static_cast<std::size_t>(s));
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int i = 0; i < s; ++i) {
            double best = std::numeric_limits<double>::infinity();
            const double* pi = points.values.data() + static_cast<std::size_t>(i) * dim;
            for (int j = 0; j < c; ++j)
                best = std::min(best, sq_dist(pi, centroids.data() +
                                                      static_cast<std::size_t>(j) * dim, dim));
            min_d2[static_cast<std::size_t>(i)] = best;
            total += best;
        }
        int chosen;
        if (total <= 0.0) {
            chosen = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(s)));
        } else {
            const double target = uniform01(rng) * total;
            double cum = 0.0;
            chosen = s - 1;
            for (int i = 0; i < s; ++i) {
                cum += min_d2[static_cast<std::size_t>(i)];
                if (cum >= target) {
                    chosen = i;
                    break;
                }
            }
        }
        std::copy_n(points.values.data() + static_cast<std::size_t>(chosen) * dim, dim,
                    centroids.begin() + static_cast<std::size_t>(c) * dim);
    }
    return centroids;
}

}  // namespace

KmeansRun kmeans_single(const Tensor& points, int k, std::uint64_t seed) {
    if (points.rank() != 2)
        throw DimensionError("kmeans: points must be s×F, got " + shape_str(points.shape));
    const int s = points.shape[0], dim = points.shape[1];
    if (k < 1 || k > s)
        throw ConfigError("kmeans: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(s) + "]");

    Rng rng(seed);
    std::vector<double> centroids = kmeanspp_init(points, k, rng);
    std::vector<int> labels(static_cast<std::size_t>(s), -1);
    std::vector<double> dist(static_cast<std::size_t>(s));

    KmeansRun run;
    constexpr int kMaxIter = 300;
    for (int iter = 0; iter < kMaxIter; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (int i = 0; i < s; ++i) {
            const double* pi = points.values.data() + static_cast<std::size_t>(i) * dim;
            int best = 0;
            double best_d = sq_dist(pi, centroids.data(), dim);
            for (int j = 1; j < k; ++j) {
                const double d = sq_dist(pi, centroids.data() +
                                                 static_cast<std::size_t>(j) * dim, dim);
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            if (labels[static_cast<std::size_t>(i)] != best) {
                labels[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
            dist[static_cast<std::size_t>(i)] = best_d;
            inertia += best_d;
        }
        run.inertia_trace.push_back(inertia);
        if (!changed) break;

        // means of assigned points
        std::vector<double> sums(static_cast<std::size_t>(k) * dim, 0.0);
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (int i = 0; i < s; ++i) {
            const int c = labels[static_cast<std::size_t>(i)];
            ++counts[static_cast<std::size_t>(c)];
            const double* pi = points.values.data() + static_cast<std::size_t>(i) * dim;
            double* sc = sums.data() + static_cast<std::size_t>(c) * dim;
            for (int d = 0; d < dim; ++d) sc[d] += pi[d];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                for (int d = 0; d < dim; ++d)
                    centroids[static_cast<std::size_t>(c) * dim + d] =
                        sums[static_cast<std::size_t>(c) * dim + d] /
                        counts[static_cast<std::size_t>(c)];
            } else {
                // re-seed from the point farthest from its centroid
                int far = 0;
                for (int i = 1; i < s; ++i)
                    if (dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)])
                        far = i;
                std::copy_n(points.values.data() + static_cast<std::size_t>(far) * dim, dim,
                            centroids.begin() + static_cast<std::size_t>(c) * dim);
                dist[static_cast<std::size_t>(far)] = 0.0;
            }
        }
    }

    // final stats against the final centroids
    double inertia = 0.0;
    for (int i = 0; i < s; ++i) {
        const double* pi = points.values.data() + static_cast<std::size_t>(i) * dim;
        int best = 0;
        double best_d = sq_dist(pi, centroids.data(), dim);
        for (int j = 1; j < k; ++j) {
            const double d =
                sq_dist(pi, centroids.data() + static_cast<std::size_t>(j) * dim, dim);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        labels[static_cast<std::size_t>(i)] = best;
        inertia += best_d;
    }
    run.assignment.labels = std::move(labels);
    run.assignment.centroids = Tensor({k, dim}, std::move(centroids));
    run.assignment.inertia = inertia;
    return run;
}

ClusterAssignment kmeans_fit(const Tensor& points, int k, int restarts, std::uint64_t seed) {
    if (restarts < 1) throw ConfigError("kmeans: restarts must be >= 1");
    ClusterAssignment best;
    bool have = false;
    for (int r = 0; r < restarts; ++r) {
        KmeansRun run = kmeans_single(points, k, derive_seed(seed, static_cast<std::uint64_t>(r)));
        if (!have || run.assignment.inertia < best.inertia) {
            best = std::move(run.assignment);
            have = true;
        }
    }
    return best;
}

// ----------------------------------------------------------- rand index

double rand_index(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size())
        throw DataError("rand_index: " + std::to_string(pred.size()) + " vs " +
                        std::to_string(truth.size()) + " labels");
    const std::size_t s = pred.size();
    if (s < 2) throw DataError("rand_index: needs at least two samples");

    std::map<std::pair<int, int>, std::int64_t> joint;
    std::map<int, std::int64_t> pred_count, truth_count;
    for (std::size_t i = 0; i < s; ++i) {
        ++joint[{pred[i], truth[i]}];
        ++pred_count[pred[i]];
        ++truth_count[truth[i]];
    }
    auto pairs2 = [](std::int64_t n) { return n * (n - 1) / 2; };
    std::int64_t agree_same = 0, pred_same = 0, truth_same = 0;
    for (const auto& [key, n] : joint) agree_same += pairs2(n);
    for (const auto& [key, n] : pred_count) pred_same += pairs2(n);
    for (const auto& [key, n] : truth_count) truth_same += pairs2(n);

    const std::int64_t total = pairs2(static_cast<std::int64_t>(s));
    const std::int64_t ptp = agree_same;
    const std::int64_t ntp = total - pred_same - truth_same + agree_same;
    return static_cast<double>(ptp + ntp) / static_cast<double>(total);
}

double top1_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw DataError("top1_accuracy: needs equal nonzero label counts, got " +
                        std::to_string(pred.size()) + " and " + std::to_string(truth.size()));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// ---------------------------------------------------------- rank tables

ResultsTable ResultsTable::from_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open results table '" + path + "'");
    ResultsTable table;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                cells.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        cells.push_back(cur);
        if (lineno == 1) {
            if (cells.size() < 2)
                throw DataError(path + ": header needs dataset plus algorithm columns");
            table.algorithms_.assign(cells.begin() + 1, cells.end());
            continue;
        }
        if (cells.size() != table.algorithms_.size() + 1)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(table.algorithms_.size() + 1) + " cells, got " +
                            std::to_string(cells.size()));
        table.datasets_.push_back(cells[0]);
        std::vector<double> row;
        row.reserve(cells.size() - 1);
        for (std::size_t i = 1; i < cells.size(); ++i) {
            if (cells[i] == "---" || cells[i].empty()) {
                row.push_back(std::nan(""));
                continue;
            }
            double v;
            try {
                v = std::stod(cells[i]);
            } catch (const std::exception&) {
                throw DataError(path + ":" + std::to_string(lineno) + ": bad value '" +
                                cells[i] + "'");
            }
            if (v < 0.0 || v > 1.0)
                throw DataError(path + ":" + std::to_string(lineno) + ": value " +
                                cells[i] + " outside [0, 1]");
            row.push_back(v);
        }
        table.cells_.push_back(std::move(row));
    }
    if (table.datasets_.empty()) throw DataError(path + ": no data rows");
    return table;
}

std::optional<double> ResultsTable::value(std::size_t dataset, std::size_t algorithm) const {
    const double v = cells_.at(dataset).at(algorithm);
    if (std::isnan(v)) return std::nullopt;
    return v;
}

std::optional<std::size_t> ResultsTable::algorithm_index(const std::string& name) const {
    for (std::size_t i = 0; i < algorithms_.size(); ++i)
        if (algorithms_[i] == name) return i;
    return std::nullopt;
}

RankSummary rank_table(const ResultsTable& table, const std::string& focus) {
    constexpr double kTieTol = 1e-9;
    const auto fi = table.algorithm_index(focus);
    if (!fi) throw DataError("algorithm '" + focus + "' is not in the table");

    RankSummary out;
    double value_sum = 0.0, rank_sum = 0.0;
    for (std::size_t d = 0; d < table.datasets().size(); ++d) {
        const auto fv = table.value(d, *fi);
        if (!fv) continue;
        ++out.datasets;
        value_sum += *fv;

        double mx = -std::numeric_limits<double>::infinity();
        int at_max = 0, strictly_higher = 0, equal = 0;
        for (std::size_t a = 0; a < table.algorithms().size(); ++a) {
            const auto v = table.value(d, a);
            if (!v) continue;
            mx = std::max(mx, *v);
        }
        for (std::size_t a = 0; a < table.algorithms().size(); ++a) {
            const auto v = table.value(d, a);
            if (!v) continue;
            if (std::abs(*v - mx) <= kTieTol) ++at_max;
            if (*v > *fv + kTieTol) ++strictly_higher;
            if (std::abs(*v - *fv) <= kTieTol) ++equal;  // includes the focus itself
        }
        if (std::abs(*fv - mx) <= kTieTol) {
            if (at_max == 1)
                ++out.win;
            else
                ++out.tie;
        } else {
            ++out.lose;
        }
        rank_sum += strictly_higher + (1.0 + equal) / 2.0;
    }
    if (out.datasets == 0) throw DataError("algorithm '" + focus + "' has no values");
    out.best = out.win + out.tie;
    out.mean_value = value_sum / out.datasets;
    out.avg_rank = rank_sum / out.datasets;
    return out;
}

}  // namespace rtfn
