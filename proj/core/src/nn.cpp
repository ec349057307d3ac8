#include "sdlpgc/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace sdlpgc::nn {

Var& ParamStore::add(const std::string& name, Tensor init) {
    if (contains(name)) throw std::logic_error("duplicate parameter name: " + name);
    params_.emplace_back(name, Var(std::move(init), true));
    return params_.back().second;
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& [n, v] : params_)
        if (n == name) return true;
    return false;
}

Var& ParamStore::get(const std::string& name) {
    for (auto& [n, v] : params_)
        if (n == name) return v;
    throw std::out_of_range("unknown parameter: " + name);
}

const Var& ParamStore::get(const std::string& name) const {
    for (const auto& [n, v] : params_)
        if (n == name) return v;
    throw std::out_of_range("unknown parameter: " + name);
}

std::size_t ParamStore::scalar_count() const noexcept {
    std::size_t total = 0;
    for (const auto& [n, v] : params_) total += v.value().size();
    return total;
}

void ParamStore::zero_grad() {
    for (auto& [n, v] : params_) v.zero_grad();
}

ParamBuilder::ParamBuilder(ParamStore& store, std::mt19937_64& rng, std::string prefix)
    : store_(&store), rng_(&rng), prefix_(std::move(prefix)) {}

ParamBuilder ParamBuilder::child(const std::string& name) const { return ParamBuilder(*store_, *rng_, path(name)); }

std::string ParamBuilder::path(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "." + name; }

Var ParamBuilder::uniform(const std::string& name, Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = dist(*rng_);
    return store_->add(path(name), std::move(t));
}

Var ParamBuilder::normal(const std::string& name, Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = dist(*rng_);
    return store_->add(path(name), std::move(t));
}

Var ParamBuilder::constant(const std::string& name, Shape shape, double value) {
    return store_->add(path(name), Tensor(std::move(shape), value));
}

Linear::Linear(ParamBuilder pb, std::size_t in, std::size_t out, bool with_bias) {
    weight = pb.uniform("weight", {out, in}, in);
    if (with_bias) bias = pb.uniform("bias", {out}, in);
}

LayerNorm::LayerNorm(ParamBuilder pb, Shape shape, std::size_t dims_) : dims(dims_) {
    if (shape.empty()) shape = {1};
    gamma = pb.constant("gamma", shape, 1.0);
    beta = pb.constant("beta", shape, 0.0);
}

GRUCell::GRUCell(ParamBuilder pb, std::size_t in, std::size_t hidden_)
    : input_gates(pb.child("input"), in, 3 * hidden_), hidden_gates(pb.child("hidden"), hidden_, 3 * hidden_),
      hidden(hidden_) {}

Var GRUCell::operator()(const Var& x, const Var& h) const {
    const std::size_t axis = x.shape().size() - 1;
    Var gx = input_gates(x, axis);
    Var gh = hidden_gates(h, axis);
    Var reset = ag::sigmoid(ag::add(ag::slice(gx, axis, 0, hidden), ag::slice(gh, axis, 0, hidden)));
    Var update = ag::sigmoid(ag::add(ag::slice(gx, axis, hidden, hidden), ag::slice(gh, axis, hidden, hidden)));
    Var candidate = ag::tanh(
        ag::add(ag::slice(gx, axis, 2 * hidden, hidden), ag::mul(reset, ag::slice(gh, axis, 2 * hidden, hidden))));
    return ag::add(ag::mul(ag::one_minus(update), h), ag::mul(update, candidate));
}

}  // namespace sdlpgc::nn
