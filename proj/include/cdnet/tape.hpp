#ifndef CDNET_TAPE_HPP_
#define CDNET_TAPE_HPP_

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cdnet/errors.hpp"
#include "cdnet/tensor.hpp"

namespace cdnet {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
  // Rows the optimizer must never touch (embedding padding row).
  std::vector<std::size_t> frozen_rows;
};

// Owns every parameter of a model. Names are unique; ids are insertion order.
template <typename T>
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor<T> value, bool trainable = true) {
    if (index_.count(name) != 0) throw ConfigError("duplicate parameter name '" + name + "'");
    const std::size_t id = params_.size();
    index_.emplace(name, id);
    Parameter<T> p;
    p.name = std::move(name);
    p.grad = Tensor<T>::zeros(value.shape());
    p.value = std::move(value);
    p.trainable = trainable;
    params_.push_back(std::move(p));
    return id;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t id) { return params_[id]; }
  const Parameter<T>& operator[](std::size_t id) const { return params_[id]; }
  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T(0));
  }
  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Gradient map keyed by parameter id. Dense buffers are allocated on first
// touch; row-sparse writes (embedding lookups) remember the touched rows so
// zeroing and reduction only visit those.
template <typename T>
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterStore<T>& store) : slots_(store.size()) {
    for (std::size_t i = 0; i < store.size(); ++i) slots_[i].shape = store[i].value.shape();
  }

  std::size_t size() const { return slots_.size(); }

  Tensor<T>& dense(std::size_t id) {
    Slot& s = slot(id);
    allocate(s);
    s.kind = Kind::kDense;
    return s.grad;
  }

  void add_row(std::size_t id, std::size_t row, std::span<const T> g) {
    Slot& s = slot(id);
    allocate(s);
    if (s.kind == Kind::kUntouched) s.kind = Kind::kSparse;
    if (s.kind == Kind::kSparse) {
      if (s.row_seen.size() != s.grad.rows()) s.row_seen.assign(s.grad.rows(), 0);
      if (!s.row_seen[row]) {
        s.row_seen[row] = 1;
        s.rows.push_back(row);
      }
    }
    auto dst = s.grad.row(row);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += g[c];
  }

  bool touched(std::size_t id) const { return slot(id).kind != Kind::kUntouched; }
  // Null when the parameter received no gradient.
  const Tensor<T>* get(std::size_t id) const {
    const Slot& s = slot(id);
    return s.kind == Kind::kUntouched ? nullptr : &s.grad;
  }
  const std::vector<std::size_t>& touched_rows(std::size_t id) const { return slot(id).rows; }
  bool is_sparse(std::size_t id) const { return slot(id).kind == Kind::kSparse; }

  void zero() {
    for (Slot& s : slots_) {
      if (s.kind == Kind::kDense) {
        s.grad.fill(T(0));
      } else if (s.kind == Kind::kSparse) {
        for (std::size_t r : s.rows) {
          auto row = s.grad.row(r);
          std::fill(row.begin(), row.end(), T(0));
          s.row_seen[r] = 0;
        }
      }
      s.rows.clear();
      s.kind = Kind::kUntouched;
    }
  }

  // out += this, visiting slots in id order and sparse rows in touch order.
  void add_to(Gradients& out) const {
    for (std::size_t id = 0; id < slots_.size(); ++id) {
      const Slot& s = slots_[id];
      if (s.kind == Kind::kDense) {
        Tensor<T>& dst = out.dense(id);
        for (std::size_t i = 0; i < s.grad.size(); ++i) dst[i] += s.grad[i];
      } else if (s.kind == Kind::kSparse) {
        for (std::size_t r : s.rows) out.add_row(id, r, s.grad.row(r));
      }
    }
  }

  // Copies into the parameters' gradient slots; untouched parameters get zeros.
  void write_to(ParameterStore<T>& store) const {
    for (std::size_t id = 0; id < slots_.size(); ++id) {
      const Slot& s = slots_[id];
      if (s.kind == Kind::kUntouched) {
        store[id].grad.fill(T(0));
      } else {
        store[id].grad = s.grad;
      }
    }
  }

 private:
  enum class Kind { kUntouched, kDense, kSparse };
  struct Slot {
    Shape shape;
    Tensor<T> grad;
    Kind kind = Kind::kUntouched;
    std::vector<std::size_t> rows;
    std::vector<std::uint8_t> row_seen;
  };

  Slot& slot(std::size_t id) {
    if (id >= slots_.size()) throw IndexError("gradient slot " + std::to_string(id) + " out of range");
    return slots_[id];
  }
  const Slot& slot(std::size_t id) const {
    if (id >= slots_.size()) throw IndexError("gradient slot " + std::to_string(id) + " out of range");
    return slots_[id];
  }
  static void allocate(Slot& s) {
    if (s.grad.size() != shape_numel(s.shape)) s.grad = Tensor<T>::zeros(s.shape);
    // A sparse slot promoted to dense keeps its contents.
  }

  std::vector<Slot> slots_;
};

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return tape->value(id).shape(); }
};

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
// which is a valid topological order, so backward walks them in reverse.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false); }

  // Differentiable input whose gradient can be read back with grad().
  Var<T> leaf(Tensor<T> value) { return push(std::move(value), grad_enabled_); }

  // Parameter leaf: the value is referenced, not copied; its gradient is
  // routed into the Gradients sink during backward.
  Var<T> parameter(const ParameterStore<T>& store, std::size_t id) {
    bind(store);
    Node n;
    n.external = &store[id].value;
    n.requires_grad = grad_enabled_ && store[id].trainable;
    n.param_id = static_cast<int>(id);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  // Appends an op result. The backward closure is kept only if some input
  // requires a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<int> inputs, BackwardFn fn) {
    bool needs = false;
    if (grad_enabled_) {
      for (int in : inputs) needs = needs || nodes_.at(static_cast<std::size_t>(in)).requires_grad;
    }
    return record_with(std::move(value), needs, std::move(fn));
  }
  Var<T> record(Tensor<T> value, const std::vector<int>& inputs, BackwardFn fn) {
    bool needs = false;
    if (grad_enabled_) {
      for (int in : inputs) needs = needs || nodes_.at(static_cast<std::size_t>(in)).requires_grad;
    }
    return record_with(std::move(value), needs, std::move(fn));
  }
  Var<T> record_with(Tensor<T> value, bool requires_grad, BackwardFn fn) {
    Var<T> v = push(std::move(value), requires_grad && grad_enabled_);
    if (nodes_.back().requires_grad) nodes_.back().backward = std::move(fn);
    return v;
  }

  const Tensor<T>& value(int id) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(id));
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }

  // Upstream gradient of a node, valid inside its backward closure.
  const Tensor<T>& out_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  // Accumulator for an input's gradient, zero-initialized on first use in
  // the current backward pass. Parameter leaves write through to the sink.
  Tensor<T>& accumulator(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.param_id >= 0) return sink_->dense(static_cast<std::size_t>(n.param_id));
    if (!n.has_grad) {
      const Shape& s = value(id).shape();
      if (n.grad.shape() != s) {
        n.grad = Tensor<T>::zeros(s);
      } else {
        n.grad.fill(T(0));
      }
      n.has_grad = true;
    }
    return n.grad;
  }

  Gradients<T>* sink() { return sink_; }

  // Gradient of a leaf after backward (zeros if the loss does not reach it).
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    if (n.param_id >= 0) throw ContractError("parameter gradients live in the Gradients map");
    if (!n.has_grad) return Tensor<T>::zeros(value(v.id).shape());
    return n.grad;
  }

  // Fresh gradient map for every parameter reachable from this tape.
  Gradients<T> backward(Var<T> loss) {
    Gradients<T> g = store_ ? Gradients<T>(*store_) : Gradients<T>();
    backward(loss, g);
    return g;
  }

  // Accumulates parameter gradients into `sink` (not zeroed first).
  void backward(Var<T> loss, Gradients<T>& sink) {
    if (loss.tape != this) throw ContractError("loss belongs to a different tape");
    if (value(loss.id).size() != 1) {
      throw ContractError("backward needs a scalar loss, got shape " + shape_str(value(loss.id).shape()));
    }
    sink_ = &sink;
    for (Node& n : nodes_) n.has_grad = false;
    if (!nodes_[static_cast<std::size_t>(loss.id)].requires_grad) {
      sink_ = nullptr;
      return;
    }
    accumulator(loss.id)[0] = T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || !n.has_grad || !n.backward) continue;
      n.backward(*this, i);
    }
    sink_ = nullptr;
  }

  // Values passing through stop_gradient can be captured on one tape and
  // replayed on another. Replaying them while perturbing inputs evaluates
  // the surrogate function whose derivative backward computes.
  void capture_stops(std::vector<Tensor<T>>* out) { capture_ = out; }
  void replay_stops(const std::vector<Tensor<T>>* in) {
    replay_ = in;
    replay_pos_ = 0;
  }
  Tensor<T> stopped_value(const Tensor<T>& v) {
    if (replay_) {
      if (replay_pos_ >= replay_->size()) throw ContractError("stop-gradient replay exhausted");
      const Tensor<T>& r = (*replay_)[replay_pos_++];
      if (r.shape() != v.shape()) throw DimensionError("stop-gradient replay shape mismatch");
      return r;
    }
    if (capture_) capture_->push_back(v);
    return v;
  }

  // Drops all nodes; buffers are released.
  void clear() {
    nodes_.clear();
    store_ = nullptr;
  }

  const ParameterStore<T>* store() const { return store_; }

  // Associates the parameter store whose Gradients map backward fills.
  void bind(const ParameterStore<T>& store) {
    if (store_ && store_ != &store) throw ContractError("a tape may reference only one parameter store");
    store_ = &store;
  }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    int param_id = -1;
    BackwardFn backward;
  };

  Var<T> push(Tensor<T> value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  std::deque<Node> nodes_;  // stable addresses: value() references survive later records
  bool grad_enabled_;
  const ParameterStore<T>* store_ = nullptr;
  Gradients<T>* sink_ = nullptr;
  std::vector<Tensor<T>>* capture_ = nullptr;
  const std::vector<Tensor<T>>* replay_ = nullptr;
  std::size_t replay_pos_ = 0;
};

}  // namespace cdnet

#endif  // CDNET_TAPE_HPP_
