#include "iatrpo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "iatrpo/error.hpp"
#include "iatrpo/hash.hpp"

namespace iatrpo {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoints assume little-endian doubles");

using json = nlohmann::json;

constexpr char kMagic[8] = {'I', 'A', 'T', 'R', 'C', 'K', 'P', 'T'};

json spec_json(const nnet::MlpSpec& s) {
  json hidden = json::array();
  for (auto h : s.hidden_dims) hidden.push_back(static_cast<std::uint64_t>(h));
  return {{"input_dim", s.input_dim}, {"hidden_dims", hidden}, {"output_dim", s.output_dim},
          {"activation", "relu"}};
}

nnet::MlpSpec spec_from(const json& j) {
  nnet::MlpSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
  s.output_dim = j.at("output_dim").get<std::size_t>();
  if (j.at("activation").get<std::string>() != "relu") throw IoError("unknown activation");
  return s;
}

struct Block {
  std::string name;
  const ParameterVector* params;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
std::uint64_t get_le(const std::uint8_t* p, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_doubles(std::vector<std::uint8_t>& out, const Vector& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
  out.insert(out.end(), p, p + v.size() * static_cast<Eigen::Index>(sizeof(double)));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  c.policy.validate();
  std::vector<Block> blocks = {{"actor", &c.policy.net.actor}, {"critic", &c.policy.net.critic}};
  if (c.policy.frozen_single) {
    blocks.push_back({"frozen_actor", &c.policy.frozen_single->actor});
    blocks.push_back({"frozen_critic", &c.policy.frozen_single->critic});
  }
  json header;
  header["format_version"] = kCheckpointVersion;
  header["kind"] = to_string(c.policy.kind);
  header["num_agents"] = c.policy.num_agents;
  header["modifier_uses_goal"] = c.policy.modifier_uses_goal;
  header["meta"] = {{"seed", c.meta.seed},
                    {"iteration", c.meta.iteration},
                    {"config_hash", c.meta.config_hash},
                    {"env_id", envs::to_string(c.meta.env_id)},
                    {"role", c.meta.role},
                    {"stage", c.meta.stage}};
  json arrays = json::array();
  for (const auto& b : blocks) {
    arrays.push_back({{"name", b.name},
                      {"spec", spec_json(b.params->spec)},
                      {"values", b.params->values.size()},
                      {"log_std", b.params->log_std.size()}});
  }
  header["arrays"] = arrays;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u32(out, kCheckpointVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& b : blocks) {
    put_doubles(out, b.params->values);
    put_doubles(out, b.params->log_std);
  }
  const Digest d = sha256(out);
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kPrefix = 8 + 4 + 8;
  if (bytes.size() < kPrefix + 32) throw IoError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw IoError("not a checkpoint (bad magic)");
  const auto version = static_cast<std::uint32_t>(get_le(bytes.data() + 8, 4));
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t body = bytes.size() - 32;
  const Digest d = sha256(std::span<const std::uint8_t>(bytes.data(), body));
  if (std::memcmp(d.data(), bytes.data() + body, 32) != 0) {
    throw IoError("checkpoint corrupt (checksum mismatch)");
  }
  const std::uint64_t header_len = get_le(bytes.data() + 12, 8);
  if (header_len > body - kPrefix) throw IoError("checkpoint truncated");
  Checkpoint c;
  std::size_t pos = kPrefix + header_len;
  try {
    const json header = json::parse(bytes.begin() + kPrefix, bytes.begin() + static_cast<std::ptrdiff_t>(pos));
    auto read_block = [&](const json& a) {
      ParameterVector p;
      p.spec = spec_from(a.at("spec"));
      const auto nv = a.at("values").get<std::size_t>();
      const auto nl = a.at("log_std").get<std::size_t>();
      if ((nv + nl) * sizeof(double) > body - pos) throw IoError("checkpoint truncated");
      p.values.resize(static_cast<Eigen::Index>(nv));
      p.log_std.resize(static_cast<Eigen::Index>(nl));
      std::memcpy(p.values.data(), bytes.data() + pos, nv * sizeof(double));
      pos += nv * sizeof(double);
      std::memcpy(p.log_std.data(), bytes.data() + pos, nl * sizeof(double));
      pos += nl * sizeof(double);
      p.validate();
      return p;
    };
    c.policy.kind = parse_policy_kind(header.at("kind").get<std::string>());
    c.policy.num_agents = header.at("num_agents").get<std::size_t>();
    c.policy.modifier_uses_goal = header.at("modifier_uses_goal").get<bool>();
    const json& m = header.at("meta");
    c.meta.seed = m.at("seed").get<std::uint64_t>();
    c.meta.iteration = m.at("iteration").get<int>();
    c.meta.config_hash = m.at("config_hash").get<std::string>();
    c.meta.env_id = envs::parse_env_id(m.at("env_id").get<std::string>());
    c.meta.role = m.at("role").get<std::size_t>();
    c.meta.stage = m.at("stage").get<std::string>();
    const json& arrays = header.at("arrays");
    if (arrays.size() != 2 && arrays.size() != 4) throw IoError("checkpoint has a bad array count");
    c.policy.net.actor = read_block(arrays[0]);
    c.policy.net.critic = read_block(arrays[1]);
    if (arrays.size() == 4) {
      ActorCritic frozen;
      frozen.actor = read_block(arrays[2]);
      frozen.critic = read_block(arrays[3]);
      c.policy.frozen_single = std::move(frozen);
    }
    if (pos != body) throw IoError("checkpoint has trailing bytes");
    c.policy.validate();
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint header malformed: ") + e.what());
  } catch (const ContractError& e) {
    throw IoError(std::string("checkpoint inconsistent: ") + e.what());
  }
  return c;
}

void write_file_atomic(const std::string& path, const std::string& data) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("error writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path);
  return buf.str();
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  const auto bytes = encode_checkpoint(c);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string data = read_file(path);
  try {
    return decode_checkpoint(std::vector<std::uint8_t>(data.begin(), data.end()));
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace iatrpo
