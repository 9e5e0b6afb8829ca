#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "avwm/ndgrad.hpp"

namespace avwm::ndgrad {

// Trainable-parameter group labels. The three-stage training schedule freezes
// and thaws parameters by these labels.
enum class ParamGroup {
  self_attn,
  cross_attn,
  visual_expert,
  audio_expert,
  visual_adaptor,
  audio_adaptor,
  visual_head,
  audio_head,
  conditioning,
};

const char* to_string(ParamGroup g);
ParamGroup param_group_from_string(const std::string& s);

// Named parameter tensors, each with exactly one group label. Iteration is in
// name order (std::map), so serialization and update order are deterministic.
class ParamStore {
 public:
  struct Entry {
    Tensor tensor;
    ParamGroup group;
  };

  Tensor add(const std::string& name, ParamGroup group, Tensor t);
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  ParamGroup group_of(const std::string& name) const;

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& mutable_entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  int64_t num_values() const;
  int64_t num_values(const std::set<ParamGroup>& groups) const;

  void zero_grad();
  void drop_grads();

  // Checkpoint file: a text manifest (name, group, shape, byte offset) followed
  // by one raw little-endian float64 blob. Round-trips are bit-exact.
  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

  // Raw value bytes in manifest (name) order; used for byte-exact freeze checks.
  std::vector<unsigned char> value_bytes() const;
  std::vector<unsigned char> value_bytes(const std::set<ParamGroup>& groups) const;

 private:
  std::map<std::string, Entry> entries_;
};

// AdamW with decoupled weight decay and bias correction. Moments are tracked
// per tensor; tensors outside the trainable group set are never touched.
class AdamW {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  explicit AdamW(Options opt) : opt_(opt) {}

  Options& options() { return opt_; }

  void step(ParamStore& params, const std::set<ParamGroup>& trainable_groups);

  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  struct Moments {
    std::vector<double> m, v;
    int64_t t = 0;
  };

  Options opt_;
  std::map<std::string, Moments> state_;
};

}  // namespace avwm::ndgrad
