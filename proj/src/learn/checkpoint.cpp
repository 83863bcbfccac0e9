#include "forklift/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "forklift/error.hpp"
#include "forklift/sensing.hpp"

namespace forklift::io {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'F', 'K', 'C', 'P'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

void put_arrays(std::vector<std::uint8_t>& out, const std::vector<NamedArray>& arrays) {
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out.insert(out.end(), a.name.begin(), a.name.end());
    put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (int d : a.shape) put_u32(out, static_cast<std::uint32_t>(d));
    const auto* p = reinterpret_cast<const std::uint8_t*>(a.data.data());
    out.insert(out.end(), p, p + a.data.size() * sizeof(float));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw ConfigError("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, b_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(float* dst, std::size_t n) {
    need(n * sizeof(float));
    std::memcpy(dst, b_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

template <class T>
std::vector<NamedArray> arrays_of(const std::vector<nn::TensorView<const T>>& views) {
  std::vector<NamedArray> out;
  for (const auto& v : views) out.push_back({v.name, v.shape, {v.data.begin(), v.data.end()}});
  return out;
}

template <class T>
void fill_from(const Checkpoint& c, std::vector<nn::TensorView<T>> views) {
  if (c.arrays.size() != views.size()) throw ConfigError("checkpoint: tensor count does not match the network");
  for (auto& v : views) {
    const NamedArray& a = c.array(v.name);
    if (a.shape != v.shape) throw ConfigError("checkpoint: shape mismatch for " + v.name);
    std::copy(a.data.begin(), a.data.end(), v.data.begin());
  }
}

void check_header(const Checkpoint& c, const char* kind, std::uint32_t expected_obs_schema) {
  const auto& m = c.metadata;
  if (m.value("kind", std::string{}) != kind) {
    throw ConfigError(std::string("checkpoint: expected kind '") + kind + "', found '" + m.value("kind", std::string{"?"}) +
                      "'");
  }
  const auto schema = m.value("obs_schema_version", std::uint32_t{0});
  if (schema != expected_obs_schema) {
    throw ConfigError("checkpoint: observation schema version " + std::to_string(schema) + " does not match " +
                      std::to_string(expected_obs_schema));
  }
}

int dim(const nlohmann::json& shape, const char* key) {
  if (!shape.contains(key)) throw ConfigError(std::string("checkpoint: shape lacks ") + key);
  return shape.at(key).get<int>();
}

}  // namespace

const NamedArray& Checkpoint::array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw ConfigError("checkpoint: missing array " + name);
}

std::vector<std::uint8_t> encode(const Checkpoint& c) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  const std::string meta = c.metadata.dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  put_arrays(out, c.arrays);
  return out;
}

Checkpoint decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw ConfigError("checkpoint: bad magic");
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint: container version " + std::to_string(version) + " is not supported");
  }
  Checkpoint c;
  const std::uint32_t meta_len = r.u32();
  try {
    c.metadata = nlohmann::json::parse(r.str(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw ConfigError("checkpoint: implausible rank for " + a.name);
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      a.shape.push_back(static_cast<int>(r.u32()));
      n *= a.shape.back();
    }
    r.need(n * sizeof(float));
    a.data.resize(n);
    r.floats(a.data.data(), n);
    c.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw ConfigError("checkpoint: trailing bytes");
  return c;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + tmp.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ConfigError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void save(const std::filesystem::path& path, const Checkpoint& c) { write_file_atomic(path, encode(c)); }

Checkpoint load(const std::filesystem::path& path) { return decode(read_file(path)); }

Checkpoint pack(const nn::ActorCritic<float>& net, nlohmann::json metadata) {
  Checkpoint c;
  c.metadata = std::move(metadata);
  c.metadata["kind"] = "actor_critic";
  if (!c.metadata.contains("obs_schema_version")) c.metadata["obs_schema_version"] = sensing::kObservationSchemaVersion;
  c.metadata["shape"] = {{"obs", net.obs_dim()},
                         {"trunk", {net.trunk[0].out, net.trunk[1].out, net.trunk[2].out, net.trunk[3].out}},
                         {"action", net.action_dim()},
                         {"priv", net.priv_dim()},
                         {"critic_hidden", net.critic_hidden.out}};
  c.arrays = arrays_of(net.tensors());
  return c;
}

Checkpoint pack(const nn::Classifier<float>& cl, nlohmann::json metadata) {
  Checkpoint c;
  c.metadata = std::move(metadata);
  c.metadata["kind"] = "classifier";
  if (!c.metadata.contains("obs_schema_version")) c.metadata["obs_schema_version"] = sensing::kObservationSchemaVersion;
  c.metadata["shape"] = {{"in", cl.hidden.in}, {"hidden", cl.hidden.out}};
  c.arrays = arrays_of(cl.tensors());
  return c;
}

nn::ActorCritic<float> unpack_actor_critic(const Checkpoint& c, std::uint32_t expected_obs_schema) {
  check_header(c, "actor_critic", expected_obs_schema);
  const auto& s = c.metadata.at("shape");
  nn::NetShape shape;
  shape.obs = dim(s, "obs");
  const auto trunk = s.at("trunk").get<std::vector<int>>();
  if (trunk.size() != 4) throw ConfigError("checkpoint: trunk must have four layers");
  std::copy(trunk.begin(), trunk.end(), shape.trunk.begin());
  shape.action = dim(s, "action");
  shape.priv = dim(s, "priv");
  shape.critic_hidden = dim(s, "critic_hidden");
  nn::ActorCritic<float> net{shape};
  fill_from(c, net.tensors());
  return net;
}

nn::Classifier<float> unpack_classifier(const Checkpoint& c, std::uint32_t expected_obs_schema) {
  check_header(c, "classifier", expected_obs_schema);
  const auto& s = c.metadata.at("shape");
  nn::Classifier<float> cl(dim(s, "in"), dim(s, "hidden"));
  fill_from(c, cl.tensors());
  return cl;
}

std::vector<std::uint8_t> payload_bytes(const Checkpoint& c) {
  std::vector<std::uint8_t> out;
  put_arrays(out, c.arrays);
  return out;
}

}  // namespace forklift::io
