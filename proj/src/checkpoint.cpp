#include "sumn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <zlib.h>

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace sumn {

namespace {

constexpr char kMagic[5] = {'S', 'U', 'M', 'N', '1'};

void append_u32(std::string& buf, uint32_t v) {
  char raw[4];
  std::memcpy(raw, &v, 4);
  buf.append(raw, 4);
}

uint32_t read_u32(const std::string& buf, size_t& pos) {
  if (pos + 4 > buf.size()) throw std::runtime_error("checkpoint truncated");
  uint32_t v;
  std::memcpy(&v, buf.data() + pos, 4);
  pos += 4;
  return v;
}

uint32_t crc_of(const std::string& buf) {
  return static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const Vocabulary& vocab) {
  if (params.vocab_size() != vocab.size()) {
    throw std::invalid_argument("save_checkpoint: vocabulary size does not match model");
  }
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  append_u32(buf, static_cast<uint32_t>(params.d));
  append_u32(buf, static_cast<uint32_t>(params.hops));
  append_u32(buf, static_cast<uint32_t>(params.vocab_size()));
  for (const auto& [name, span] : params.tensors()) {
    buf.append(reinterpret_cast<const char*>(span.data()), span.size() * sizeof(float));
  }
  std::ostringstream vb;
  write_vocab(vocab, vb);
  buf += vb.str();
  append_u32(buf, crc_of(buf));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint file for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string buf = ss.str();
  if (buf.size() < sizeof(kMagic) + 16) throw std::runtime_error("checkpoint truncated");

  const std::string body = buf.substr(0, buf.size() - 4);
  size_t pos = body.size();
  uint32_t stored_crc = read_u32(buf, pos);
  if (stored_crc != crc_of(body)) {
    throw std::runtime_error("checkpoint checksum mismatch: " + path);
  }

  pos = 0;
  if (std::memcmp(body.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a SUMN1 checkpoint: " + path);
  }
  pos += sizeof(kMagic);
  const uint32_t d = read_u32(body, pos);
  const uint32_t hops = read_u32(body, pos);
  const uint32_t vsize = read_u32(body, pos);

  Checkpoint ckpt;
  Rng rng(0);
  ckpt.params = ModelParams::init(static_cast<int>(vsize), static_cast<int>(d),
                                  static_cast<int>(hops), rng);
  for (auto& [name, span] : ckpt.params.tensors()) {
    const size_t bytes = span.size() * sizeof(float);
    if (pos + bytes > body.size()) throw std::runtime_error("checkpoint truncated");
    std::memcpy(span.data(), body.data() + pos, bytes);
    pos += bytes;
  }

  std::istringstream vs(body.substr(pos));
  ckpt.vocab = read_vocab(vs);
  if (ckpt.vocab.size() != static_cast<int>(vsize)) {
    throw std::runtime_error("checkpoint vocabulary size mismatch");
  }
  return ckpt;
}

}  // namespace sumn
