#ifndef RTFN_PARAM_STORE_HPP
#define RTFN_PARAM_STORE_HPP

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "rtfn/tensor.hpp"

namespace rtfn {

// One named, shaped trainable value with its paired gradient buffer.
// Buffers (trainable=false) ride along for running statistics: they are
// serialized with checkpoints but ignored by the optimizer.
struct Param {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool trainable = true;

    // session bookkeeping: node id on the tape this param was last placed on
    int node = -1;
    std::uint64_t session = 0;
};

class ParamStore {
public:
    Param& add(const std::string& name, Shape shape, bool trainable = true);

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;

    // Registration order; checkpoints and the optimizer walk params in this
    // order so runs are reproducible.
    const std::vector<std::string>& names() const { return names_; }

    std::size_t count() const { return names_.size(); }
    std::int64_t total_size(bool trainable_only = false) const;

    // Place a parameter on the tape as a tracked leaf. Calling use() twice
    // for the same param within one tape returns the same node, so shared
    // layers accumulate fan-out gradients instead of splitting them.
    Tensor use(Tape& tape, const std::string& name);

    // After backward(): add every session node's gradient into the param
    // gradient buffers and close the session.
    void pull_grads(const Tape& tape);

    void zero_grads();

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
    // unique_ptr keeps Param& from add()/at() stable while the store grows
    std::vector<std::unique_ptr<Param>> params_;
};

// Fill with uniform values in ±sqrt(1/fan_in).
void init_uniform_fan_in(Param& p, int fan_in, Rng& rng);

}  // namespace rtfn

#endif
