#include "rsn/store.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "binary_io.hpp"
#include "rsn/common.hpp"

namespace rsn {

namespace {

constexpr char kActMagic[] = "RSNACT01";

}  // namespace

std::vector<std::uint8_t> serialize_activations(const ActivationMatrix& m) {
  if (m.n_examples() == 0 || m.n_neurons() == 0)
    throw ValidationError("activation file needs J > 0 and N > 0");
  m.validate(false);
  detail::ByteWriter w;
  w.bytes(kActMagic, 8);
  w.u32(kActivationVersion);
  w.u32(static_cast<std::uint32_t>(m.n_examples()));
  w.u32(static_cast<std::uint32_t>(m.n_neurons()));
  for (const auto& n : m.neurons) {
    if (n.layer > 0xffff) throw ValidationError("layer index does not fit the u16 field");
    w.u8(static_cast<std::uint8_t>(n.kind));
    w.u8(0);
    w.u16(static_cast<std::uint16_t>(n.layer));
    w.u32(n.column);
  }
  for (auto l : m.labels) w.u8(l);
  for (Eigen::Index i = 0; i < m.values.rows(); ++i)
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) w.f32(m.values(i, j));
  return std::move(w.data());
}

ActivationMatrix deserialize_activations(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "activation file");
  const std::string magic = r.str(8);
  if (magic.starts_with("RSNACT") && magic != kActMagic)
    throw IoError("activation file: unsupported version tag '" + magic + "' (expected RSNACT01)");
  if (magic != kActMagic) throw IoError("activation file: bad magic (expected RSNACT01)");
  const auto version = r.u32();
  if (version != kActivationVersion)
    throw IoError("activation file: unsupported version " + std::to_string(version));
  const std::size_t J = r.u32(), N = r.u32();
  if (J == 0 || N == 0) throw IoError("activation file: empty matrix");
  // Check the full size before allocating anything.
  r.need(N * 8 + J + J * N * 4);
  ActivationMatrix m;
  m.neurons.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    NeuronId n;
    try {
      n.kind = neuron_kind_from_code(r.u8());
    } catch (const ValidationError& e) {
      throw IoError(std::string("activation file: ") + e.what());
    }
    if (r.u8() != 0) throw IoError("activation file: nonzero pad byte in neuron record");
    n.layer = r.u16();
    n.column = r.u32();
    m.neurons.push_back(n);
  }
  m.labels.reserve(J);
  for (std::size_t i = 0; i < J; ++i) {
    const auto l = r.u8();
    if (l > 1) throw IoError("activation file: label byte is not 0/1");
    m.labels.push_back(l);
  }
  m.values.resize(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(N));
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      const float v = r.f32();
      if (!std::isfinite(v))
        throw IoError("activation file: non-finite value at row " + std::to_string(i) +
                      ", column " + std::to_string(j));
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  if (r.remaining() != 0)
    throw IoError("activation file: " + std::to_string(r.remaining()) + " trailing bytes");
  return m;
}

void write_activation_file(const std::filesystem::path& path, const ActivationMatrix& m) {
  detail::write_file_bytes(path.string(), serialize_activations(m));
}

ActivationMatrix read_activation_file(const std::filesystem::path& path) {
  return deserialize_activations(detail::read_file_bytes(path.string()));
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr))
    throw IoError("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string file_digest(const std::filesystem::path& path) {
  return sha256_hex(detail::read_file_bytes(path.string()));
}

void RunManifest::record(StageRecord stage) {
  for (auto& s : stages)
    if (s.name == stage.name) {
      s = std::move(stage);
      return;
    }
  stages.push_back(std::move(stage));
}

const StageRecord* RunManifest::find(const std::string& name) const {
  for (const auto& s : stages)
    if (s.name == name) return &s;
  return nullptr;
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["stages"] = nlohmann::ordered_json::array();
  nlohmann::ordered_json times = nlohmann::ordered_json::object();
  for (const auto& s : stages) {
    nlohmann::ordered_json e;
    e["name"] = s.name;
    e["config_hash"] = s.config_hash;
    e["seed"] = s.seed;
    e["inputs"] = s.inputs;
    e["outputs"] = s.outputs;
    j["stages"].push_back(e);
    times[s.name] = {{"started", s.started}, {"finished", s.finished}};
  }
  j["timestamps"] = times;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    for (const auto& e : j.at("stages")) {
      StageRecord s;
      s.name = e.at("name").get<std::string>();
      s.config_hash = e.at("config_hash").get<std::string>();
      s.seed = e.at("seed").get<std::uint64_t>();
      s.inputs = e.at("inputs").get<std::map<std::string, std::string>>();
      s.outputs = e.at("outputs").get<std::map<std::string, std::string>>();
      if (j.contains("timestamps") && j["timestamps"].contains(s.name)) {
        s.started = j["timestamps"][s.name].value("started", "");
        s.finished = j["timestamps"][s.name].value("finished", "");
      }
      m.stages.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

RunManifest RunManifest::load(const std::filesystem::path& root) {
  const auto p = root / "manifest.json";
  if (!std::filesystem::exists(p)) return {};
  return from_json(read_json_file(p));
}

void RunManifest::save(const std::filesystem::path& root) const {
  write_json_file(root / "manifest.json", to_json());
}

std::vector<std::string> RunManifest::verify(const std::filesystem::path& root) const {
  std::vector<std::string> bad;
  for (const auto& s : stages)
    for (const auto& [path, digest] : s.outputs) {
      const auto p = root / path;
      if (!std::filesystem::exists(p) || file_digest(p) != digest) bad.push_back(path);
    }
  return bad;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  detail::write_file_bytes(path.string(),
                           {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto b = detail::read_file_bytes(path.string());
  return std::string(b.begin(), b.end());
}

void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace rsn
