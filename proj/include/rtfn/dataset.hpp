#ifndef RTFN_DATASET_HPP
#define RTFN_DATASET_HPP

#include <string>
#include <vector>

#include "rtfn/common.hpp"

namespace rtfn {

struct Sample {
    std::vector<double> values;
    int label = 0;
};

// Loaded, preprocessed dataset: equal-length z-normalized series with labels
// remapped to contiguous 0-based ids (raw label values sorted ascending).
struct SeriesDataset {
    std::string name;
    std::vector<Sample> train, test;
    int num_classes = 0;
    int input_length = 0;
    std::vector<double> raw_labels;  // index = class id

    int class_of_raw(double raw) const;  // DataError if unknown
};

// (x - mean) / max(population_sigma, 1e-8); constant series map to zeros.
std::vector<double> z_normalize(const std::vector<double>& series);

// UCR 2018 text format: one series per line, label first, TSV or CSV.
// Missing values (NaN tokens / empty fields) are linearly interpolated from
// the nearest present neighbors; shorter series are right-padded with zeros
// to the maximum train length; every series is then z-normalized.
SeriesDataset load_ucr_dataset(const std::string& train_path, const std::string& test_path);

// Emit samples using raw labels, one series per line; inverse of the parse
// step (pre-normalization values are not recoverable, so this is used for
// subsampled copies and round-trip checks on raw files).
void write_ucr_file(const std::string& path, const std::vector<std::vector<double>>& series,
                    const std::vector<double>& labels, char delimiter = '\t');

// Load one UCR file against a fixed label map and length (the `evaluate`
// command has only a test file plus a checkpoint). Labels outside the map
// are a DataError; series longer than input_length are rejected.
std::vector<Sample> load_ucr_split(const std::string& path,
                                   const std::vector<double>& raw_labels, int input_length);

// Deterministic per-class round-robin subsample of a loaded split.
std::vector<Sample> stratified_subsample(const std::vector<Sample>& samples, int count,
                                         int num_classes);

// Dataset name from a UCR file path ("dir/Coffee_TRAIN.tsv" -> "Coffee").
std::string dataset_name_from_path(const std::string& path);

}  // namespace rtfn

#endif
