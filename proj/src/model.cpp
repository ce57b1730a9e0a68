#include "chembfn/model.hpp"

#include <stdexcept>

namespace chembfn {

std::size_t ParamStore::add(std::string name, Matrix value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    const std::size_t idx = values_.size();
    index_.emplace(name, idx);
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return idx;
}

std::size_t ParamStore::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return it->second;
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
}

Binding::Binding(const ParamStore& store, bool requires_grad)
    : store_(&store), requires_grad_(requires_grad), leaves_(store.size()) {}

ag::Var Binding::get(std::size_t index) {
    auto& leaf = leaves_.at(index);
    if (!leaf) leaf = ag::reference(store_->value(index), requires_grad_);
    return leaf;
}

std::vector<Matrix> Binding::gradients() const {
    std::vector<Matrix> grads;
    grads.reserve(store_->size());
    for (std::size_t i = 0; i < store_->size(); ++i) {
        const Matrix& v = store_->value(i);
        if (leaves_[i] && !leaves_[i].grad().empty()) grads.push_back(leaves_[i].grad());
        else grads.emplace_back(v.rows(), v.cols());
    }
    return grads;
}

void Binding::accumulate_into(std::vector<Matrix>& sums) const {
    if (sums.size() != store_->size()) {
        sums.clear();
        for (const auto& v : store_->values()) sums.emplace_back(v.rows(), v.cols());
    }
    for (std::size_t i = 0; i < leaves_.size(); ++i)
        if (leaves_[i] && !leaves_[i].grad().empty()) sums[i] += leaves_[i].grad();
}

Matrix Model::logits(const Matrix& input, double t, const std::optional<Labels>& labels) const {
    Binding binding(params(), false);
    return forward(input, t, labels, binding, ForwardOptions{}).logits.value();
}

}  // namespace chembfn
