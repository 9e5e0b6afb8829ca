#include "avwm/param_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "avwm/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian");

namespace avwm::ndgrad {

const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::self_attn: return "self_attn";
    case ParamGroup::cross_attn: return "cross_attn";
    case ParamGroup::visual_expert: return "visual_expert";
    case ParamGroup::audio_expert: return "audio_expert";
    case ParamGroup::visual_adaptor: return "visual_adaptor";
    case ParamGroup::audio_adaptor: return "audio_adaptor";
    case ParamGroup::visual_head: return "visual_head";
    case ParamGroup::audio_head: return "audio_head";
    case ParamGroup::conditioning: return "conditioning";
  }
  return "?";
}

ParamGroup param_group_from_string(const std::string& s) {
  static const std::map<std::string, ParamGroup> lut = {
      {"self_attn", ParamGroup::self_attn},
      {"cross_attn", ParamGroup::cross_attn},
      {"visual_expert", ParamGroup::visual_expert},
      {"audio_expert", ParamGroup::audio_expert},
      {"visual_adaptor", ParamGroup::visual_adaptor},
      {"audio_adaptor", ParamGroup::audio_adaptor},
      {"visual_head", ParamGroup::visual_head},
      {"audio_head", ParamGroup::audio_head},
      {"conditioning", ParamGroup::conditioning},
  };
  auto it = lut.find(s);
  if (it == lut.end()) throw ConfigError("unknown parameter group: " + s);
  return it->second;
}

Tensor ParamStore::add(const std::string& name, ParamGroup group, Tensor t) {
  if (entries_.count(name)) throw UsageError("param store: duplicate name " + name);
  if (name.find_first_of(" \t\n") != std::string::npos)
    throw UsageError("param store: name must not contain whitespace: " + name);
  entries_.emplace(name, Entry{t, group});
  return t;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("param store: no entry named " + name);
  return it->second.tensor;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("param store: no entry named " + name);
  return it->second.tensor;
}

ParamGroup ParamStore::group_of(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("param store: no entry named " + name);
  return it->second.group;
}

int64_t ParamStore::num_values() const {
  int64_t n = 0;
  for (const auto& [_, e] : entries_) n += e.tensor.size();
  return n;
}

int64_t ParamStore::num_values(const std::set<ParamGroup>& groups) const {
  int64_t n = 0;
  for (const auto& [_, e] : entries_)
    if (groups.count(e.group)) n += e.tensor.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) e.tensor.zero_grad();
}

void ParamStore::drop_grads() {
  for (auto& [_, e] : entries_) e.tensor.drop_grad();
}

void ParamStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("checkpoint: cannot open " + path + " for writing");
  out << "AVWM-CKPT v1\n";
  out << "params " << entries_.size() << "\n";
  int64_t offset = 0;
  for (const auto& [name, e] : entries_) {
    out << name << " " << to_string(e.group) << " " << e.tensor.rows() << " "
        << e.tensor.cols() << " " << offset << "\n";
    offset += e.tensor.size() * 8;
  }
  out << "blob " << offset << "\n";
  for (const auto& [name, e] : entries_) {
    const auto& v = e.tensor.values();
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw UsageError("checkpoint: write failed for " + path);
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("checkpoint: cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "AVWM-CKPT v1") throw UsageError("checkpoint: bad magic in " + path);
  std::getline(in, line);
  std::istringstream hs(line);
  std::string tag;
  std::size_t count = 0;
  hs >> tag >> count;
  if (tag != "params") throw UsageError("checkpoint: missing params header in " + path);

  struct Row {
    std::string name;
    ParamGroup group;
    int rows, cols;
    int64_t offset;
  };
  std::vector<Row> rows;
  rows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::getline(in, line);
    std::istringstream ls(line);
    Row r;
    std::string group;
    ls >> r.name >> group >> r.rows >> r.cols >> r.offset;
    if (!ls) throw UsageError("checkpoint: malformed manifest row: " + line);
    r.group = param_group_from_string(group);
    rows.push_back(r);
  }
  std::getline(in, line);
  std::istringstream bs(line);
  int64_t nbytes = 0;
  bs >> tag >> nbytes;
  if (tag != "blob") throw UsageError("checkpoint: missing blob header in " + path);
  std::vector<double> blob(static_cast<std::size_t>(nbytes / 8));
  in.read(reinterpret_cast<char*>(blob.data()), nbytes);
  if (in.gcount() != nbytes) throw UsageError("checkpoint: truncated blob in " + path);

  ParamStore store;
  for (const auto& r : rows) {
    const int64_t n = static_cast<int64_t>(r.rows) * r.cols;
    std::vector<double> v(blob.begin() + r.offset / 8, blob.begin() + r.offset / 8 + n);
    store.add(r.name, r.group, Tensor::from(r.rows, r.cols, std::move(v), true));
  }
  return store;
}

std::vector<unsigned char> ParamStore::value_bytes() const {
  std::vector<unsigned char> bytes;
  for (const auto& [_, e] : entries_) {
    const auto& v = e.tensor.values();
    const auto* p = reinterpret_cast<const unsigned char*>(v.data());
    bytes.insert(bytes.end(), p, p + v.size() * sizeof(double));
  }
  return bytes;
}

std::vector<unsigned char> ParamStore::value_bytes(const std::set<ParamGroup>& groups) const {
  std::vector<unsigned char> bytes;
  for (const auto& [_, e] : entries_) {
    if (!groups.count(e.group)) continue;
    const auto& v = e.tensor.values();
    const auto* p = reinterpret_cast<const unsigned char*>(v.data());
    bytes.insert(bytes.end(), p, p + v.size() * sizeof(double));
  }
  return bytes;
}

void AdamW::step(ParamStore& params, const std::set<ParamGroup>& trainable_groups) {
  for (auto& [name, e] : params.mutable_entries()) {
    if (!trainable_groups.count(e.group)) continue;
    if (!e.tensor.has_grad())
      throw ContractError("adamw: missing gradient on trainable tensor " + name);
    auto& w = e.tensor.mutable_values();
    const auto& g = e.tensor.grad();
    auto& mom = state_[name];
    if (mom.m.empty()) {
      mom.m.assign(w.size(), 0.0);
      mom.v.assign(w.size(), 0.0);
    }
    mom.t += 1;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(mom.t));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(mom.t));
    for (std::size_t i = 0; i < w.size(); ++i) {
      mom.m[i] = opt_.beta1 * mom.m[i] + (1.0 - opt_.beta1) * g[i];
      mom.v[i] = opt_.beta2 * mom.v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      w[i] -= opt_.lr * (mhat / (std::sqrt(vhat) + opt_.eps) + opt_.weight_decay * w[i]);
    }
  }
}

void AdamW::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("optimizer state: cannot open " + path + " for writing");
  out << "AVWM-OPT v1\n";
  out << "tensors " << state_.size() << "\n";
  for (const auto& [name, mom] : state_)
    out << name << " " << mom.m.size() << " " << mom.t << "\n";
  out << "blob\n";
  for (const auto& [name, mom] : state_) {
    out.write(reinterpret_cast<const char*>(mom.m.data()),
              static_cast<std::streamsize>(mom.m.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(mom.v.data()),
              static_cast<std::streamsize>(mom.v.size() * sizeof(double)));
  }
}

void AdamW::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("optimizer state: cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "AVWM-OPT v1") throw UsageError("optimizer state: bad magic in " + path);
  std::getline(in, line);
  std::istringstream hs(line);
  std::string tag;
  std::size_t count = 0;
  hs >> tag >> count;
  struct Row {
    std::string name;
    std::size_t n;
    int64_t t;
  };
  std::vector<Row> rows(count);
  for (auto& r : rows) {
    std::getline(in, line);
    std::istringstream ls(line);
    ls >> r.name >> r.n >> r.t;
  }
  std::getline(in, line);  // "blob"
  state_.clear();
  for (const auto& r : rows) {
    Moments mom;
    mom.t = r.t;
    mom.m.resize(r.n);
    mom.v.resize(r.n);
    in.read(reinterpret_cast<char*>(mom.m.data()),
            static_cast<std::streamsize>(r.n * sizeof(double)));
    in.read(reinterpret_cast<char*>(mom.v.data()),
            static_cast<std::streamsize>(r.n * sizeof(double)));
    state_[r.name] = std::move(mom);
  }
  if (!in) throw UsageError("optimizer state: truncated file " + path);
}

}  // namespace avwm::ndgrad
