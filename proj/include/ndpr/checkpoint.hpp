#pragma once

// Binary checkpoint container, version 1:
//
//   bytes 0..7    magic "NDPRCKPT"
//   u32           format version
//   u64           header length H
//   H bytes       UTF-8 JSON header: config, vocabulary, tag names and hash,
//                 dev F, epoch, and the tensor directory (name, rows, cols)
//   ...           tensor payloads in directory order, row-major f64
//   u64           FNV-1a 64 of every preceding byte
//
// Integers and doubles are little-endian. Loading validates the magic,
// version, sizes, checksum and tag-set hash before building anything.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ndpr/training.hpp"

namespace ndpr {

inline constexpr char kCheckpointMagic[8] = {'N', 'D', 'P', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::uint64_t fnv1a(const std::string& bytes, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(bytes[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}
inline std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& t : ck.tensors) dir.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  const nlohmann::json header = {{"format", "ndpr-checkpoint"},
                                 {"version", kCheckpointVersion},
                                 {"config", ck.config.to_json()},
                                 {"vocab", ck.vocab.tokens()},
                                 {"tags", ck.tags.names()},
                                 {"tagset_hash", detail::hex64(ck.tags.hash())},
                                 {"dev_f", ck.dev_f},
                                 {"epoch", ck.epoch},
                                 {"tensors", dir}};
  const std::string head = header.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, head.size());
  out += head;
  for (const auto& t : ck.tensors) {
    for (double v : t.values) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  detail::put_u64(out, detail::fnv1a(out, out.size()));
  return out;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for checkpoint '" + path + "'");
}

// `expected_tags`, when given, must match the stored label space.
inline Checkpoint deserialize_checkpoint(const std::string& bytes,
                                         const std::optional<TagSet>& expected_tags = std::nullopt) {
  constexpr std::size_t kPrefix = sizeof kCheckpointMagic + 4 + 8;
  if (bytes.size() < kPrefix + 8) throw CheckpointError("checkpoint truncated (" + std::to_string(bytes.size()) + " bytes)");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const std::uint32_t version = detail::get_u32(bytes, 8);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t head_len = detail::get_u64(bytes, 12);
  if (head_len > bytes.size() - kPrefix - 8) throw CheckpointError("checkpoint truncated inside header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(kPrefix, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  std::size_t payload = 0;
  try {
    for (const auto& t : header.at("tensors")) {
      NamedTensor nt;
      nt.name = t.at("name").get<std::string>();
      nt.rows = t.at("rows").get<std::size_t>();
      nt.cols = t.at("cols").get<std::size_t>();
      payload += nt.rows * nt.cols;
      ck.tensors.push_back(std::move(nt));
    }
    const std::size_t expected = kPrefix + head_len + 8 * payload + 8;
    if (bytes.size() < expected) {
      throw CheckpointError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes, expected " +
                            std::to_string(expected));
    }
    if (bytes.size() > expected) throw CheckpointError("checkpoint has trailing bytes");
    if (detail::get_u64(bytes, expected - 8) != detail::fnv1a(bytes, expected - 8)) {
      throw CheckpointError("checkpoint checksum mismatch (corrupt file)");
    }
    ck.config = TrainConfig::from_json(header.at("config"));
    ck.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>());
    ck.tags = TagSet(header.at("tags").get<std::vector<std::string>>());
    ck.dev_f = header.at("dev_f").get<double>();
    ck.epoch = header.at("epoch").get<std::size_t>();
    if (header.at("tagset_hash").get<std::string>() != detail::hex64(ck.tags.hash())) {
      throw CheckpointError("checkpoint tag-set hash does not match its tag names");
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (expected_tags && expected_tags->hash() != ck.tags.hash()) {
    throw CheckpointError("tag-set mismatch: checkpoint hash " + detail::hex64(ck.tags.hash()) +
                          ", expected " + detail::hex64(expected_tags->hash()));
  }
  if (ck.config.model.vocab_size != ck.vocab.size() || ck.config.model.tag_count != ck.tags.size()) {
    throw CheckpointError("checkpoint config disagrees with its vocabulary or tag set");
  }
  std::size_t pos = kPrefix + head_len;
  for (auto& t : ck.tensors) {
    t.values.resize(t.rows * t.cols);
    for (double& v : t.values) {
      v = std::bit_cast<double>(detail::get_u64(bytes, pos));
      pos += 8;
    }
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path,
                                  const std::optional<TagSet>& expected_tags = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, expected_tags);
}

}  // namespace ndpr
