#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace gec::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  long size() const { return static_cast<long>(value.size()); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Owns named parameters with stable addresses; creation order is the
/// canonical order used for checkpoints and optimizer state.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& add(const std::string& name, Matrix init, bool trainable = true);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> trainable();
  long scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> index_;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  const Matrix& value() const;
  long rows() const { return value().rows(); }
  long cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Tape of matrix operations recorded for reverse-mode differentiation.
/// With record_grad=false no backward closures are kept (inference).
class Graph {
 public:
  explicit Graph(bool training = false, bool record_grad = true, std::uint64_t seed = 0)
      : training_(training), record_(record_grad), rng_(seed) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var param(Parameter& p);
  Var constant(Matrix value);

  /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into parameters.
  void backward(Var loss);

  /// Number of recorded nodes; truncate(mark) drops every node created after
  /// size() returned mark. Vars to dropped nodes become dangling.
  int size() const { return static_cast<int>(nodes_.size()); }
  void truncate(int mark);

  bool training() const { return training_; }
  bool recording() const { return record_; }
  std::mt19937_64& rng() { return rng_; }

  // Op-author interface.
  using Backward = std::function<void(Graph&, int self)>;
  Var make(Matrix value, bool needs_grad, Backward backward);
  bool needs_grad(Var v) const { return v.valid() && nodes_[v.id()].needs_grad; }
  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  // Gradient accumulator of a node, zero-initialised on first access.
  Matrix& grad_ref(int id);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };
  bool training_;
  bool record_;
  std::mt19937_64 rng_;
  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, int> param_nodes_;
};

inline const Matrix& Var::value() const { return graph_->value(id_); }

}  // namespace gec::nn
