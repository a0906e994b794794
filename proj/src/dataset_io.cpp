#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "icevae/data.hpp"
#include "icevae/errors.hpp"

namespace icevae::data {
namespace {

std::string format_real(double v) {
  std::array<char, 40> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
  return std::string(buf.data(), res.ptr);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

[[noreturn]] void fail(std::size_t row, const std::string& column, const std::string& what) {
  throw ParseError("row " + std::to_string(row) + ", column '" + column + "': " + what);
}

double parse_real(const std::string& field, std::size_t row, const std::string& column) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = first + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || field.empty()) fail(row, column, "expected a number, got '" + field + "'");
  return v;
}

int parse_int(const std::string& field, std::size_t row, const std::string& column) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    fail(row, column, "expected an integer, got '" + field + "'");
  }
  return v;
}

// Counts a run of "<prefix>1", "<prefix>2", ... starting at header[pos].
std::size_t count_block(const std::vector<std::string>& header, std::size_t pos, const std::string& prefix) {
  std::size_t n = 0;
  while (pos + n < header.size() && header[pos + n] == prefix + std::to_string(n + 1)) ++n;
  return n;
}

}  // namespace

void write_csv(const Dataset& ds, const GroundTruth* truth, const std::filesystem::path& path) {
  if (truth && truth->size() != ds.size()) throw DimensionError("ground truth is not aligned with the dataset");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());

  out << "g,u,w";
  for (std::size_t j = 0; j < ds.d_x(); ++j) out << ",x_" << j + 1;
  for (std::size_t j = 0; j < ds.d_s(); ++j) out << ",s_" << j + 1;
  out << ",y";
  if (truth) {
    for (std::size_t j = 0; j < truth->d_z; ++j) out << ",z_" << j + 1;
    out << ",tau";
    for (std::size_t j = 0; j < ds.d_s(); ++j) out << ",s0_" << j + 1;
    for (std::size_t j = 0; j < ds.d_s(); ++j) out << ",s1_" << j + 1;
  }
  out << '\n';

  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Unit& u = ds[i];
    out << (u.g == Group::observational ? 'o' : 'e') << ',' << u.u << ',' << u.w;
    for (double v : u.x) out << ',' << format_real(v);
    for (double v : u.s) out << ',' << format_real(v);
    out << ',';
    if (u.y) out << format_real(*u.y);
    if (truth) {
      const Truth& t = (*truth)[i];
      for (double v : t.z) out << ',' << format_real(v);
      out << ',' << format_real(t.tau);
      for (double v : t.s0) out << ',' << format_real(v);
      for (double v : t.s1) out << ',' << format_real(v);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

LoadedDataset read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  const auto header = split_fields(line);

  if (header.size() < 4 || header[0] != "g" || header[1] != "u" || header[2] != "w") {
    throw ParseError("row 0: header must start with g,u,w");
  }
  std::size_t pos = 3;
  const std::size_t d_x = count_block(header, pos, "x_");
  pos += d_x;
  const std::size_t d_s = count_block(header, pos, "s_");
  pos += d_s;
  if (d_x == 0 || d_s == 0) throw ParseError("row 0: header needs x_1.. and s_1.. columns");
  if (pos >= header.size() || header[pos] != "y") throw ParseError("row 0: expected column 'y' after the s block");
  ++pos;

  bool has_truth = false;
  std::size_t d_z = 0;
  if (pos < header.size()) {
    d_z = count_block(header, pos, "z_");
    const std::size_t tau_pos = pos + d_z;
    const bool ok = d_z > 0 && tau_pos < header.size() && header[tau_pos] == "tau" &&
                    count_block(header, tau_pos + 1, "s0_") == d_s &&
                    count_block(header, tau_pos + 1 + d_s, "s1_") == d_s &&
                    header.size() == tau_pos + 1 + 2 * d_s;
    if (!ok) throw ParseError("row 0: malformed ground-truth column block");
    has_truth = true;
  }

  LoadedDataset result{Dataset(d_x, d_s), std::nullopt};
  GroundTruth truth;
  truth.d_z = d_z;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line);
    if (f.size() != header.size()) {
      fail(row, header.back(), "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    }
    Unit u;
    if (f[0] == "o") {
      u.g = Group::observational;
    } else if (f[0] == "e") {
      u.g = Group::experimental;
    } else {
      fail(row, "g", "expected 'o' or 'e', got '" + f[0] + "'");
    }
    u.u = parse_int(f[1], row, "u");
    u.w = parse_int(f[2], row, "w");
    if (u.w != 0 && u.w != 1) fail(row, "w", "expected 0 or 1, got '" + f[2] + "'");
    std::size_t c = 3;
    for (std::size_t j = 0; j < d_x; ++j, ++c) u.x.push_back(parse_real(f[c], row, header[c]));
    for (std::size_t j = 0; j < d_s; ++j, ++c) u.s.push_back(parse_real(f[c], row, header[c]));
    if (u.g == Group::observational) {
      if (f[c].empty()) fail(row, "y", "observational unit is missing its long-term outcome");
      u.y = parse_real(f[c], row, "y");
    } else if (!f[c].empty()) {
      fail(row, "y", "experimental unit must not carry a long-term outcome");
    }
    ++c;
    if (has_truth) {
      Truth t;
      for (std::size_t j = 0; j < d_z; ++j, ++c) t.z.push_back(parse_real(f[c], row, header[c]));
      t.tau = parse_real(f[c], row, "tau");
      ++c;
      for (std::size_t j = 0; j < d_s; ++j, ++c) t.s0.push_back(parse_real(f[c], row, header[c]));
      for (std::size_t j = 0; j < d_s; ++j, ++c) t.s1.push_back(parse_real(f[c], row, header[c]));
      truth.rows.push_back(std::move(t));
    }
    result.data.add(std::move(u));
  }
  if (has_truth) result.truth = std::move(truth);
  return result;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".meta.json");
  return p;
}

void write_sidecar(const SynthConfig& c, const std::filesystem::path& csv_path) {
  nlohmann::ordered_json meta = {{"scenario", c.scenario},       {"seed", c.seed},
                                 {"n_o", c.n_o},                 {"n_e", c.n_e},
                                 {"beta", c.beta},               {"d_u_levels", c.d_u_levels},
                                 {"noise_std_s", c.noise_std_s}, {"noise_std_y", c.noise_std_y}};
  std::ofstream out(sidecar_path(csv_path), std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + sidecar_path(csv_path).string());
  out << meta.dump(2) << '\n';
}

SynthConfig read_sidecar(const std::filesystem::path& csv_path) {
  std::ifstream in(sidecar_path(csv_path));
  if (!in) throw ParseError("missing metadata sidecar for " + csv_path.string());
  try {
    const auto meta = nlohmann::json::parse(in);
    SynthConfig c;
    c.scenario = meta.at("scenario").get<int>();
    c.seed = meta.at("seed").get<std::uint64_t>();
    c.n_o = meta.at("n_o").get<std::size_t>();
    c.n_e = meta.at("n_e").get<std::size_t>();
    c.beta = meta.at("beta").get<double>();
    c.d_u_levels = meta.at("d_u_levels").get<int>();
    c.noise_std_s = meta.at("noise_std_s").get<double>();
    c.noise_std_y = meta.at("noise_std_y").get<double>();
    return c;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(sidecar_path(csv_path).string() + ": " + ex.what());
  }
}

}  // namespace icevae::data
