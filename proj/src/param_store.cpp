#include "rtfn/param_store.hpp"

#include <cmath>

namespace rtfn {

Param& ParamStore::add(const std::string& name, Shape shape, bool trainable) {
    if (has(name)) throw ContractError("param '" + name + "' registered twice");
    if (shape.empty() || numel(shape) <= 0)
        throw DimensionError("param '" + name + "': bad shape " + shape_str(shape));
    Param p;
    p.name = name;
    p.shape = std::move(shape);
    p.value.assign(static_cast<std::size_t>(numel(p.shape)), 0.0);
    p.grad.assign(p.value.size(), 0.0);
    p.trainable = trainable;
    index_[name] = params_.size();
    names_.push_back(name);
    params_.push_back(std::make_unique<Param>(std::move(p)));
    return *params_.back();
}

Param& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown param '" + name + "'");
    return *params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown param '" + name + "'");
    return *params_[it->second];
}

std::int64_t ParamStore::total_size(bool trainable_only) const {
    std::int64_t n = 0;
    for (const auto& p : params_)
        if (!trainable_only || p->trainable) n += static_cast<std::int64_t>(p->value.size());
    return n;
}

Tensor ParamStore::use(Tape& tape, const std::string& name) {
    Param& p = at(name);
    Tensor t(p.shape, p.value);
    if (!tape.recording()) return t;
    if (p.session == tape.stamp() && p.node >= 0) {
        t.node = p.node;
        return t;
    }
    tape.track(t);
    p.node = t.node;
    p.session = tape.stamp();
    return t;
}

void ParamStore::pull_grads(const Tape& tape) {
    for (auto& p : params_) {
        if (p->session != tape.stamp() || p->node < 0) continue;
        const auto g = tape.grad(p->node);
        for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
        p->node = -1;
        p->session = 0;
    }
}

void ParamStore::zero_grads() {
    for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

void init_uniform_fan_in(Param& p, int fan_in, Rng& rng) {
    const double bound = std::sqrt(1.0 / fan_in);
    for (auto& v : p.value) v = uniform_range(rng, -bound, bound);
}

}  // namespace rtfn
