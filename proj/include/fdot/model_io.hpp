#pragma once

// Reduced-model persistence. A model is a directory holding a JSON manifest,
// the generating mesh as text, and one binary file per matrix. Matrix files
// carry a 24-byte header (8-byte magic "FDOTMTX0", rows and cols as 64-bit
// little-endian) followed by row-major IEEE-754 doubles. Round-trips are
// byte-exact; the manifest pins dimensions, reduction parameters, and the
// SHA-256 fingerprint of the mesh text.

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdot/mesh.hpp"
#include "fdot/reduce.hpp"
#include "fdot/sha256.hpp"
#include "fdot/types.hpp"

namespace fdot {

inline constexpr int kModelFormatVersion = 1;
inline constexpr char kMatrixMagic[8] = {'F', 'D', 'O', 'T', 'M', 'T', 'X', '0'};

inline std::string mesh_fingerprint(const Mesh& mesh) { return sha256_hex(mesh_to_text(mesh)); }

namespace detail {

inline void put_u64_le(std::ostream& f, std::uint64_t v) {
  std::array<unsigned char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  f.write(reinterpret_cast<const char*>(b.data()), 8);
}

inline std::uint64_t get_u64_le(std::istream& f) {
  std::array<unsigned char, 8> b{};
  f.read(reinterpret_cast<char*>(b.data()), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void save_matrix(const Mat& M, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("save_matrix: cannot open " + path);
  f.write(kMatrixMagic, 8);
  detail::put_u64_le(f, static_cast<std::uint64_t>(M.rows()));
  detail::put_u64_le(f, static_cast<std::uint64_t>(M.cols()));
  std::vector<double> row(static_cast<size_t>(M.cols()));
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) row[static_cast<size_t>(j)] = M(i, j);
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!f) throw ValidationError("save_matrix: write failed for " + path);
}

inline Mat load_matrix(const std::string& path, const std::string& block_name) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("load_matrix: cannot open block '" + block_name + "' at " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMatrixMagic, 8) != 0)
    throw ValidationError("load_matrix: corrupted block '" + block_name + "' (bad magic)");
  const std::uint64_t rows = detail::get_u64_le(f);
  const std::uint64_t cols = detail::get_u64_le(f);
  if (!f || rows > (1u << 26) || cols > (1u << 26))
    throw ValidationError("load_matrix: corrupted block '" + block_name + "' (bad dimensions)");
  Mat M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::vector<double> row(static_cast<size_t>(cols));
  for (std::uint64_t i = 0; i < rows; ++i) {
    f.read(reinterpret_cast<char*>(row.data()),
           static_cast<std::streamsize>(row.size() * sizeof(double)));
    if (!f)
      throw ValidationError("load_matrix: corrupted block '" + block_name + "' (truncated data)");
    for (std::uint64_t j = 0; j < cols; ++j)
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[static_cast<size_t>(j)];
  }
  char extra;
  if (f.read(&extra, 1))
    throw ValidationError("load_matrix: corrupted block '" + block_name + "' (trailing bytes)");
  return M;
}

inline void save_vector(const Vec& v, const std::string& path) { save_matrix(Mat(v), path); }

inline Vec load_vector(const std::string& path, const std::string& block_name) {
  const Mat M = load_matrix(path, block_name);
  if (M.cols() != 1 && M.rows() != 0)
    throw ValidationError("load_matrix: corrupted block '" + block_name + "' (expected one column)");
  return M.col(0);
}

/// Write the model container. The mesh is stored alongside and must be the
/// one the model was built from (fingerprint-checked).
inline void save_model(const ReducedModel& model, const Mesh& mesh, const std::string& dir,
                       bool include_ak = true, GramVariant gram = GramVariant::L2) {
  const std::string mesh_text = mesh_to_text(mesh);
  if (sha256_hex(mesh_text) != model.fingerprint)
    throw ValidationError("save_model: mesh does not match the model fingerprint");
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream f(dir + "/mesh.txt", std::ios::binary);
    if (!f) throw ValidationError("save_model: cannot write mesh.txt");
    f.write(mesh_text.data(), static_cast<std::streamsize>(mesh_text.size()));
  }

  nlohmann::ordered_json man;
  man["format_version"] = kModelFormatVersion;
  man["level"] = model.mesh_level;
  man["delta"] = model.delta;
  man["epsilon"] = model.epsilon;
  man["gram"] = gram_name(gram);
  man["K"] = model.cross.K;
  man["m"] = static_cast<int>(model.DD.size());
  man["k"] = static_cast<int>(model.QxK.rows());
  man["xK"] = model.selection.xK();
  man["mK"] = model.selection.mK();
  man["NK"] = model.NK();
  man["N"] = model.N();
  man["fingerprint"] = model.fingerprint;
  man["has_ak"] = include_ak;
  man["xKK"] = model.selection.xKK;
  man["mKK"] = model.selection.mKK;
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const auto& pr : model.cross.pairs) pairs.push_back({pr.first, pr.second});
  man["cross_pairs"] = std::move(pairs);

  save_matrix(model.QxK, dir + "/QxK.bin");
  save_matrix(model.QmK, dir + "/QmK.bin");
  save_matrix(model.PN, dir + "/PN.bin");
  save_matrix(model.AN, dir + "/AN.bin");
  if (include_ak) save_matrix(model.AK, dir + "/AK.bin");
  save_vector(model.lambdaN, dir + "/lambdaN.bin");
  save_vector(model.lambdaK, dir + "/lambdaK.bin");
  save_vector(model.DD, dir + "/DD.bin");

  std::ofstream f(dir + "/manifest.json", std::ios::binary);
  if (!f) throw ValidationError("save_model: cannot write manifest.json");
  f << man.dump(2) << "\n";
}

struct LoadedModel {
  ReducedModel model;
  Mesh mesh;
  GramVariant gram = GramVariant::L2;
};

inline LoadedModel load_model(const std::string& dir) {
  nlohmann::json man;
  {
    std::ifstream f(dir + "/manifest.json", std::ios::binary);
    if (!f) throw ValidationError("load_model: cannot open " + dir + "/manifest.json");
    try {
      f >> man;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("load_model: manifest parse error: ") + e.what());
    }
  }
  const int version = man.at("format_version").get<int>();
  if (version != kModelFormatVersion)
    throw ValidationError("load_model: format version mismatch (file " + std::to_string(version) +
                          ", supported " + std::to_string(kModelFormatVersion) + ")");

  LoadedModel out;
  ReducedModel& model = out.model;
  model.mesh_level = man.at("level").get<int>();
  model.delta = man.at("delta").get<double>();
  model.epsilon = man.at("epsilon").get<double>();
  model.fingerprint = man.at("fingerprint").get<std::string>();
  out.gram = parse_gram(man.value("gram", "L2"));
  model.selection.delta = model.delta;
  model.selection.xKK = man.at("xKK").get<std::vector<int>>();
  model.selection.mKK = man.at("mKK").get<std::vector<int>>();
  model.cross.K = man.at("K").get<int>();
  model.cross.epsilon = model.epsilon;
  for (const auto& pr : man.at("cross_pairs"))
    model.cross.pairs.emplace_back(pr.at(0).get<int>(), pr.at(1).get<int>());

  {
    std::ifstream f(dir + "/mesh.txt", std::ios::binary);
    if (!f) throw ValidationError("load_model: cannot open " + dir + "/mesh.txt");
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string mesh_text = ss.str();
    if (sha256_hex(mesh_text) != model.fingerprint)
      throw ValidationError("load_model: mesh.txt does not match the manifest fingerprint");
    out.mesh = mesh_from_text(mesh_text, model.mesh_level);
  }

  model.QxK = load_matrix(dir + "/QxK.bin", "QxK");
  model.QmK = load_matrix(dir + "/QmK.bin", "QmK");
  model.PN = load_matrix(dir + "/PN.bin", "PN");
  model.AN = load_matrix(dir + "/AN.bin", "AN");
  if (man.at("has_ak").get<bool>()) model.AK = load_matrix(dir + "/AK.bin", "AK");
  model.lambdaN = load_vector(dir + "/lambdaN.bin", "lambdaN");
  model.lambdaK = load_vector(dir + "/lambdaK.bin", "lambdaK");
  model.DD = load_vector(dir + "/DD.bin", "DD");
  model.ANt = model.DD.cwiseInverse().asDiagonal() * model.AN.transpose();

  auto expect = [&](const char* what, Eigen::Index got, int want) {
    if (got != want)
      throw ValidationError(std::string("load_model: corrupted block '") + what +
                            "' (dimension disagrees with manifest)");
  };
  expect("DD", model.DD.size(), man.at("m").get<int>());
  expect("QxK", model.QxK.rows(), man.at("k").get<int>());
  expect("QxK", model.QxK.cols(), man.at("xK").get<int>());
  expect("QmK", model.QmK.cols(), man.at("mK").get<int>());
  expect("PN", model.PN.rows(), man.at("N").get<int>());
  expect("PN", model.PN.cols(), man.at("NK").get<int>());
  expect("AN", model.AN.rows(), man.at("N").get<int>());
  expect("lambdaN", model.lambdaN.size(), man.at("N").get<int>());
  expect("lambdaK", model.lambdaK.size(), man.at("NK").get<int>());
  if (model.NK() != man.at("NK").get<int>())
    throw ValidationError("load_model: cross_pairs length disagrees with manifest NK");
  return out;
}

/// Guard for using a model against a mesh it was not built from.
inline void ensure_fingerprint(const ReducedModel& model, const Mesh& mesh) {
  if (mesh_fingerprint(mesh) != model.fingerprint)
    throw ValidationError("model fingerprint mismatch: model was built from a different mesh");
}

}  // namespace fdot
