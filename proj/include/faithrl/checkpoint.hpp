#pragma once

// Binary checkpoint container (little-endian):
//   magic "FRLCKPT\0" | u32 version | u32 scalar bytes | u32 vocab | u32 embed
//   | u32 hidden | u64 vocabulary hash | u64 parameter count | parameters
//   | u64 FNV-1a checksum of the parameter bytes

#include <cstring>
#include <filesystem>
#include <optional>
#include <string>

#include "faithrl/io.hpp"
#include "faithrl/model.hpp"

namespace faithrl {

inline constexpr std::uint32_t checkpoint_version = 1;

struct CheckpointHeader {
  std::uint32_t version = checkpoint_version;
  std::uint32_t scalar_bytes = 8;
  NetDims dims;
  std::uint64_t vocab_hash = 0;
};

namespace detail {

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw Error("checkpoint is truncated");
  U v;
  std::memcpy(&v, in.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

inline constexpr char checkpoint_magic[8] = {'F', 'R', 'L', 'C', 'K', 'P', 'T', '\0'};

}  // namespace detail

template <typename T>
std::string serialize_checkpoint(const BasicPolicyValueNet<T>& net, std::uint64_t vocab_hash) {
  std::string out(detail::checkpoint_magic, sizeof(detail::checkpoint_magic));
  detail::put<std::uint32_t>(out, checkpoint_version);
  detail::put<std::uint32_t>(out, sizeof(T));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(net.dims().vocab));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(net.dims().embed));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(net.dims().hidden));
  detail::put<std::uint64_t>(out, vocab_hash);
  detail::put<std::uint64_t>(out, net.param_count());
  const auto p = net.params();
  const std::string_view bytes(reinterpret_cast<const char*>(p.data()), p.size_bytes());
  out.append(bytes);
  detail::put<std::uint64_t>(out, fnv1a64(bytes));
  return out;
}

template <typename T>
void save_checkpoint(const BasicPolicyValueNet<T>& net, const std::filesystem::path& path, std::uint64_t vocab_hash = 0) {
  io::write_atomic(path, serialize_checkpoint(net, vocab_hash));
}

inline CheckpointHeader read_checkpoint_header(const std::string& blob, std::size_t& pos) {
  pos = 0;
  if (blob.size() < sizeof(detail::checkpoint_magic) ||
      std::memcmp(blob.data(), detail::checkpoint_magic, sizeof(detail::checkpoint_magic)) != 0)
    throw Error("not a checkpoint file");
  pos = sizeof(detail::checkpoint_magic);
  CheckpointHeader h;
  h.version = detail::take<std::uint32_t>(blob, pos);
  if (h.version != checkpoint_version)
    throw Error("unsupported checkpoint version " + std::to_string(h.version));
  h.scalar_bytes = detail::take<std::uint32_t>(blob, pos);
  h.dims.vocab = static_cast<int>(detail::take<std::uint32_t>(blob, pos));
  h.dims.embed = static_cast<int>(detail::take<std::uint32_t>(blob, pos));
  h.dims.hidden = static_cast<int>(detail::take<std::uint32_t>(blob, pos));
  h.vocab_hash = detail::take<std::uint64_t>(blob, pos);
  return h;
}

/// Parses a checkpoint. When `expected` is set, the vocabulary size and hash
/// must match it.
template <typename T = double>
BasicPolicyValueNet<T> parse_checkpoint(const std::string& blob, const Vocabulary* expected = nullptr) {
  std::size_t pos = 0;
  const auto h = read_checkpoint_header(blob, pos);
  if (h.scalar_bytes != sizeof(T))
    throw Error("checkpoint stores " + std::to_string(h.scalar_bytes * 8) + "-bit parameters, expected " +
                std::to_string(sizeof(T) * 8));
  if (expected) {
    if (h.dims.vocab != expected->size())
      throw Error("checkpoint shape mismatch: vocabulary size " + std::to_string(h.dims.vocab) + " vs " +
                  std::to_string(expected->size()));
    if (h.vocab_hash != expected->hash()) throw Error("checkpoint vocabulary hash does not match");
  }
  const auto count = detail::take<std::uint64_t>(blob, pos);
  if (count != BasicPolicyValueNet<T>::param_count(h.dims)) throw Error("checkpoint shape mismatch: parameter count");
  const std::size_t nbytes = static_cast<std::size_t>(count) * sizeof(T);
  if (blob.size() != pos + nbytes + sizeof(std::uint64_t)) throw Error("checkpoint is truncated or has trailing bytes");
  std::vector<T> params(static_cast<std::size_t>(count));
  std::memcpy(params.data(), blob.data() + pos, nbytes);
  const std::string_view bytes(blob.data() + pos, nbytes);
  pos += nbytes;
  if (detail::take<std::uint64_t>(blob, pos) != fnv1a64(bytes)) throw Error("checkpoint checksum mismatch");
  return BasicPolicyValueNet<T>::from_params(h.dims, std::move(params));
}

template <typename T = double>
BasicPolicyValueNet<T> load_checkpoint(const std::filesystem::path& path, const Vocabulary* expected = nullptr) {
  return parse_checkpoint<T>(io::read_file(path), expected);
}

}  // namespace faithrl
