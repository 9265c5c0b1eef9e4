#ifndef RTFN_GRADCHECK_HPP
#define RTFN_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "rtfn/param_store.hpp"
#include "rtfn/tensor.hpp"

namespace rtfn {

struct GradCheckResult {
    std::string name;
    int instances = 0;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Compare tape gradients against central finite differences (default step
// 1e-5) for a scalar-valued forward. The forward must rebuild its graph from
// the given leaf tensors on every call. Relative error uses an absolute
// floor of 1e-2 in the denominator so near-zero gradients are compared at a
// matching absolute scale. `max_coords` > 0 samples that many coordinates
// per leaf instead of sweeping all of them.
double fd_max_rel_err(const std::function<Tensor(Tape&, std::vector<Tensor>&)>& forward,
                      std::vector<Tensor> leaves, double step = 1e-5,
                      int max_coords = -1, Rng* coord_rng = nullptr);

// Same idea for parameters living in a store: the forward reads them through
// ParamStore::use, finite differences perturb the stored values in place.
double fd_max_rel_err_params(const std::function<Tensor(Tape&)>& forward, ParamStore& store,
                             const std::vector<std::string>& params, double step = 1e-5,
                             int max_coords = -1, Rng* coord_rng = nullptr);

// The full suite behind the `gradcheck` CLI command and acceptance gate:
// every differentiable op and layer, >= 20 random instances each, plus the
// two full-model composites at their looser tolerance.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed);

bool all_passed(const std::vector<GradCheckResult>& results);

}  // namespace rtfn

#endif
