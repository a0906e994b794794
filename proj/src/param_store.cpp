#include "icevae/param_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "icevae/errors.hpp"
#include "icevae/simd/kernels.hpp"

namespace icevae {

std::size_t ParamStore::add(const std::string& name, Tensor init) {
  if (index_.contains(name)) throw UsageError("duplicate parameter '" + name + "'");
  Entry e;
  e.name = name;
  e.grad = Tensor(init.shape(), 0.0);
  e.first_moment = Tensor(init.shape(), 0.0);
  e.second_moment = Tensor(init.shape(), 0.0);
  e.value = std::move(init);
  entries_.push_back(std::move(e));
  index_.emplace(name, entries_.size() - 1);
  return entries_.size() - 1;
}

std::size_t ParamStore::add_glorot(const std::string& name, std::size_t rows, std::size_t cols,
                                   std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w = Tensor::matrix(rows, cols);
  for (double& v : w.values()) v = dist(rng);
  return add(name, std::move(w));
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamStore::accumulate_grad(std::size_t i, std::span<const double> g) {
  Entry& e = entries_.at(i);
  if (g.size() != e.grad.size()) throw DimensionError("gradient size mismatch for '" + e.name + "'");
  double* dst = e.grad.data();
  for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
  e.has_grad = true;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) {
    e.grad.fill(0.0);
    e.has_grad = false;
  }
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.entries_.size() != b.entries_.size() || a.step_ != b.step_) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value)) return false;
  }
  return true;
}

void adam_step(ParamStore& store, const AdamConfig& config) {
  for (const auto& e : store.entries()) {
    if (!e.has_grad) throw UsageError("adam_step: parameter '" + e.name + "' has no gradient");
  }
  store.advance_step();
  const double t = static_cast<double>(store.step());
  const simd::AdamCoeffs coeffs{config.learning_rate, config.beta1, config.beta2, config.eps,
                                1.0 - std::pow(config.beta1, t), 1.0 - std::pow(config.beta2, t)};
  const auto& k = simd::kernels();
  for (auto& e : store.entries()) {
    k.adam_update(e.value.size(), e.value.data(), e.grad.data(), e.first_moment.data(), e.second_moment.data(),
                  coeffs);
    e.has_grad = false;
  }
}

namespace {

using nlohmann::json;

ParamStore::Entry& checked_entry(ParamStore& store, const std::string& name, const std::vector<std::size_t>& shape) {
  if (!store.contains(name)) throw ParseError("checkpoint parameter '" + name + "' not present in the model");
  auto& e = store.entry(store.index_of(name));
  if (e.value.shape() != shape) throw ParseError("checkpoint parameter '" + name + "' has a different shape");
  return e;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("truncated binary checkpoint");
  return v;
}

constexpr char kMagic[4] = {'I', 'C', 'V', 'P'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_json(const ParamStore& store, const std::filesystem::path& path) {
  json params = json::array();
  for (const auto& e : store.entries()) {
    params.push_back({{"name", e.name},
                      {"shape", e.value.shape()},
                      {"values", std::vector<double>(e.value.values().begin(), e.value.values().end())}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << json{{"step", store.step()}, {"params", params}}.dump(1) << '\n';
}

void load_json(ParamStore& store, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& ex) {
    throw ParseError(path.string() + ": " + ex.what());
  }
  for (const auto& p : doc.at("params")) {
    auto& e = checked_entry(store, p.at("name").get<std::string>(), p.at("shape").get<std::vector<std::size_t>>());
    e.value = Tensor(e.value.shape(), p.at("values").get<std::vector<double>>());
  }
  // Step counter is restored for completeness; moments are not checkpointed.
  const auto step = doc.value("step", std::uint64_t{0});
  while (store.step() < step) store.advance_step();
}

void save_binary(const ParamStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint64_t>(out, store.step());
  write_le<std::uint64_t>(out, store.size());
  for (const auto& e : store.entries()) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) write_le<std::uint64_t>(out, d);
    for (double v : e.value.values()) write_le<double>(out, v);
  }
}

void load_binary(ParamStore& store, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw ParseError(path.string() + ": not a parameter checkpoint");
  if (read_le<std::uint32_t>(in) != kVersion) throw ParseError(path.string() + ": unsupported checkpoint version");
  const auto step = read_le<std::uint64_t>(in);
  const auto count = read_le<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(read_le<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    std::vector<std::size_t> shape(read_le<std::uint32_t>(in));
    for (auto& d : shape) d = read_le<std::uint64_t>(in);
    auto& e = checked_entry(store, name, shape);
    std::vector<double> values(e.value.size());
    for (auto& v : values) v = read_le<double>(in);
    e.value = Tensor(shape, std::move(values));
  }
  while (store.step() < step) store.advance_step();
}

}  // namespace icevae
