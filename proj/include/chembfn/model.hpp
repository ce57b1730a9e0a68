#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "chembfn/autograd.hpp"
#include "chembfn/matrix.hpp"
#include "chembfn/rng.hpp"

namespace chembfn {

using Labels = std::vector<double>;

// Named, ordered collection of parameter tensors.
class ParamStore {
public:
    std::size_t add(std::string name, Matrix value);
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t index_of(const std::string& name) const;

    const std::string& name(std::size_t i) const { return names_.at(i); }
    Matrix& value(std::size_t i) { return values_.at(i); }
    const Matrix& value(std::size_t i) const { return values_.at(i); }
    std::vector<Matrix>& values() noexcept { return values_; }
    const std::vector<Matrix>& values() const noexcept { return values_; }

    std::size_t parameter_count() const;

private:
    std::vector<std::string> names_;
    std::vector<Matrix> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Per-graph view of a ParamStore: hands out leaf variables aliasing the
// stored tensors and collects their gradients after backward().
class Binding {
public:
    Binding(const ParamStore& store, bool requires_grad);

    ag::Var get(std::size_t index);
    bool requires_grad() const noexcept { return requires_grad_; }

    // Gradient for every parameter, zero for those never touched.
    std::vector<Matrix> gradients() const;
    void accumulate_into(std::vector<Matrix>& sums) const;

private:
    const ParamStore* store_;
    bool requires_grad_;
    std::vector<ag::Var> leaves_;
};

struct ForwardOptions {
    // Length-D key mask; false marks positions excluded as attention keys.
    const std::vector<bool>* attention_mask = nullptr;
    // Dropout is active only when an RNG is supplied.
    Rng* dropout_rng = nullptr;
    // Stop after the pre-projection features; `logits` is left empty.
    bool hidden_only = false;
};

struct ForwardResult {
    ag::Var logits;  // D x K
    ag::Var hidden;  // D x hidden
};

// Anything that maps a D x K grid of categorical parameters, a time and an
// optional label vector to D x K logits.
class Model {
public:
    virtual ~Model() = default;

    virtual int categories() const = 0;
    virtual std::size_t label_dim() const = 0;
    virtual ForwardResult forward(const Matrix& input, double t, const std::optional<Labels>& labels,
                                  Binding& binding, const ForwardOptions& options) const = 0;
    // Parameter storage backing forward(); stubs may return an empty store.
    virtual const ParamStore& params() const = 0;

    Matrix logits(const Matrix& input, double t, const std::optional<Labels>& labels) const;
};

}  // namespace chembfn
