#include "rtfn/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace rtfn {

namespace {

struct RawSeries {
    std::vector<double> values;  // NaN marks a missing entry
    double label = 0.0;
};

bool is_missing_token(const std::string& tok) {
    if (tok.empty()) return true;
    std::string low;
    for (char c : tok) low += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return low == "nan" || low == "?";
}

double parse_value(const std::string& tok, const std::string& path, int lineno) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(lineno) + ": non-numeric value '" +
                        tok + "'");
    }
}

std::vector<RawSeries> parse_ucr_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open dataset file '" + path + "'");
    std::vector<RawSeries> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
        std::vector<std::string> tokens;
        std::string cur;
        for (char c : line) {
            if (c == delim) {
                tokens.push_back(cur);
                cur.clear();
            } else if (c != ' ') {
                cur += c;
            }
        }
        tokens.push_back(cur);
        if (tokens.size() < 2)
            throw DataError(path + ":" + std::to_string(lineno) + ": no values after label");
        RawSeries rs;
        if (is_missing_token(tokens[0]))
            throw DataError(path + ":" + std::to_string(lineno) + ": missing label");
        rs.label = parse_value(tokens[0], path, lineno);
        rs.values.reserve(tokens.size() - 1);
        bool any_present = false;
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            if (is_missing_token(tokens[i])) {
                rs.values.push_back(std::nan(""));
            } else {
                rs.values.push_back(parse_value(tokens[i], path, lineno));
                any_present = true;
            }
        }
        if (!any_present)
            throw DataError(path + ":" + std::to_string(lineno) + ": every value is missing");
        out.push_back(std::move(rs));
    }
    if (out.empty()) throw DataError("dataset file '" + path + "' is empty");
    return out;
}

void interpolate_missing(std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    int i = 0;
    while (i < n) {
        if (!std::isnan(v[static_cast<std::size_t>(i)])) {
            ++i;
            continue;
        }
        int j = i;
        while (j < n && std::isnan(v[static_cast<std::size_t>(j)])) ++j;
        const int left = i - 1;          // last present index before the gap, or -1
        const int right = j;             // first present index after, or n
        for (int k = i; k < j; ++k) {
            double val;
            if (left < 0 && right >= n) {
                val = 0.0;  // unreachable: all-missing rejected at parse time
            } else if (left < 0) {
                val = v[static_cast<std::size_t>(right)];
            } else if (right >= n) {
                val = v[static_cast<std::size_t>(left)];
            } else {
                const double frac = static_cast<double>(k - left) / (right - left);
                val = v[static_cast<std::size_t>(left)] +
                      frac * (v[static_cast<std::size_t>(right)] - v[static_cast<std::size_t>(left)]);
            }
            v[static_cast<std::size_t>(k)] = val;
        }
        i = j;
    }
}

}  // namespace

std::vector<double> z_normalize(const std::vector<double>& series) {
    if (series.empty()) throw DataError("z_normalize: empty series");
    const double n = static_cast<double>(series.size());
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : series) var += (v - mean) * (v - mean);
    var /= n;
    const double sigma = std::max(std::sqrt(var), 1e-8);
    std::vector<double> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) out[i] = (series[i] - mean) / sigma;
    return out;
}

int SeriesDataset::class_of_raw(double raw) const {
    for (std::size_t i = 0; i < raw_labels.size(); ++i)
        if (raw_labels[i] == raw) return static_cast<int>(i);
    throw DataError("label " + std::to_string(raw) + " is not in the training label set");
}

SeriesDataset load_ucr_dataset(const std::string& train_path, const std::string& test_path) {
    auto train_raw = parse_ucr_file(train_path);
    auto test_raw = parse_ucr_file(test_path);

    SeriesDataset ds;
    ds.name = dataset_name_from_path(train_path);

    // label ids by ascending raw value over the train split
    std::map<double, int> label_map;
    for (const auto& rs : train_raw) label_map[rs.label] = 0;
    int next = 0;
    for (auto& [raw, id] : label_map) {
        id = next++;
        ds.raw_labels.push_back(raw);
    }
    ds.num_classes = next;

    int max_len = 0;
    for (const auto& rs : train_raw)
        max_len = std::max(max_len, static_cast<int>(rs.values.size()));
    ds.input_length = max_len;

    auto finish = [&](std::vector<RawSeries>& raw, const std::string& path,
                      bool is_test) -> std::vector<Sample> {
        std::vector<Sample> out;
        out.reserve(raw.size());
        int lineno = 0;
        for (auto& rs : raw) {
            ++lineno;
            auto it = label_map.find(rs.label);
            if (it == label_map.end()) {
                if (!is_test)
                    throw DataError("internal: train label missing from map");
                throw DataError(path + ": test label " + std::to_string(rs.label) +
                                " absent from train label set");
            }
            if (static_cast<int>(rs.values.size()) > max_len)
                throw DataError(path + ":" + std::to_string(lineno) + ": series length " +
                                std::to_string(rs.values.size()) +
                                " exceeds train maximum " + std::to_string(max_len));
            interpolate_missing(rs.values);
            rs.values.resize(static_cast<std::size_t>(max_len), 0.0);  // right pad
            Sample s;
            s.values = z_normalize(rs.values);
            s.label = it->second;
            out.push_back(std::move(s));
        }
        return out;
    };
    ds.train = finish(train_raw, train_path, false);
    ds.test = finish(test_raw, test_path, true);
    return ds;
}

std::vector<Sample> load_ucr_split(const std::string& path,
                                   const std::vector<double>& raw_labels, int input_length) {
    auto raw = parse_ucr_file(path);
    std::vector<Sample> out;
    out.reserve(raw.size());
    int lineno = 0;
    for (auto& rs : raw) {
        ++lineno;
        int id = -1;
        for (std::size_t i = 0; i < raw_labels.size(); ++i)
            if (raw_labels[i] == rs.label) id = static_cast<int>(i);
        if (id < 0)
            throw DataError(path + ":" + std::to_string(lineno) + ": label " +
                            std::to_string(rs.label) + " absent from the checkpoint label map");
        if (static_cast<int>(rs.values.size()) > input_length)
            throw DataError(path + ":" + std::to_string(lineno) + ": series length " +
                            std::to_string(rs.values.size()) + " exceeds model input length " +
                            std::to_string(input_length));
        interpolate_missing(rs.values);
        rs.values.resize(static_cast<std::size_t>(input_length), 0.0);
        Sample s;
        s.values = z_normalize(rs.values);
        s.label = id;
        out.push_back(std::move(s));
    }
    return out;
}

void write_ucr_file(const std::string& path, const std::vector<std::vector<double>>& series,
                    const std::vector<double>& labels, char delimiter) {
    if (series.size() != labels.size())
        throw DataError("write_ucr_file: series and label counts differ");
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    char buf[40];
    for (std::size_t i = 0; i < series.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", labels[i]);
        os << buf;
        for (double v : series[i]) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            os << delimiter << buf;
        }
        os << '\n';
    }
}

std::vector<Sample> stratified_subsample(const std::vector<Sample>& samples, int count,
                                         int num_classes) {
    if (count >= static_cast<int>(samples.size())) return samples;
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < samples.size(); ++i)
        by_class[static_cast<std::size_t>(samples[i].label)].push_back(static_cast<int>(i));
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(count));
    std::size_t cursor = 0;
    std::vector<std::size_t> offsets(static_cast<std::size_t>(num_classes), 0);
    while (static_cast<int>(out.size()) < count) {
        const std::size_t cls = cursor % static_cast<std::size_t>(num_classes);
        ++cursor;
        auto& off = offsets[cls];
        if (off >= by_class[cls].size()) continue;
        out.push_back(samples[static_cast<std::size_t>(by_class[cls][off++])]);
    }
    return out;
}

std::string dataset_name_from_path(const std::string& path) {
    std::string base = path;
    const auto slash = base.find_last_of("/\\");
    if (slash != std::string::npos) base = base.substr(slash + 1);
    const auto dot = base.find_last_of('.');
    if (dot != std::string::npos) base = base.substr(0, dot);
    for (const char* suffix : {"_TRAIN", "_TEST", "_train", "_test"}) {
        const auto pos = base.rfind(suffix);
        if (pos != std::string::npos && pos + std::string(suffix).size() == base.size()) {
            base = base.substr(0, pos);
            break;
        }
    }
    return base;
}

}  // namespace rtfn
