#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "icevae/tensor.hpp"

namespace icevae {

/// Named learnable arrays with gradient slots and Adam moments.
///
/// Entries keep insertion order, which fixes the iteration order of the
/// optimizer and of checkpoints. Gradients accumulate across backward passes
/// until adam_step() consumes and clears them.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor first_moment;
    Tensor second_moment;
    bool has_grad = false;
  };

  /// Registers a parameter. Throws UsageError on a duplicate name.
  std::size_t add(const std::string& name, Tensor init);
  /// Registers a rows x cols weight drawn uniformly from +-sqrt(6 / (rows + cols)).
  std::size_t add_glorot(const std::string& name, std::size_t rows, std::size_t cols, std::mt19937_64& rng);

  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index_of(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;

  Entry& entry(std::size_t i) { return entries_.at(i); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  Tensor& value(const std::string& name) { return entries_[index_of(name)].value; }
  const Tensor& value(const std::string& name) const { return entries_[index_of(name)].value; }
  const Tensor& grad(const std::string& name) const { return entries_[index_of(name)].grad; }
  std::span<Entry> entries() { return entries_; }
  std::span<const Entry> entries() const { return entries_; }

  void accumulate_grad(std::size_t i, std::span<const double> g);
  void zero_grad();

  std::uint64_t step() const { return step_; }
  void advance_step() { ++step_; }

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t step_ = 0;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update of every parameter, then clears all gradients.
/// Throws UsageError if any parameter has not received a gradient since the
/// last step.
void adam_step(ParamStore& store, const AdamConfig& config = {});

// Checkpoints. JSON: {"step": n, "params": [{"name", "shape", "values"}...]}.
// Binary: "ICVP" magic, u32 version, u64 step, u64 count, then per parameter
// u32 name length, name bytes, u32 rank, u64 dims, f64 values; all little-endian.
void save_json(const ParamStore& store, const std::filesystem::path& path);
void load_json(ParamStore& store, const std::filesystem::path& path);
void save_binary(const ParamStore& store, const std::filesystem::path& path);
void load_binary(ParamStore& store, const std::filesystem::path& path);

}  // namespace icevae
