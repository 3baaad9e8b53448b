#include "octo/learn/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace octo::learn {

static_assert(std::endian::native == std::endian::little, "checkpoint bytes assume a little-endian host");

std::string base64_encode(const std::string& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw CheckpointError("base64 length not a multiple of 4");
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw CheckpointError("invalid base64");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

namespace {

std::string row_major_bytes(const Mat<double>& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  std::string bytes(static_cast<std::size_t>(rm.size()) * sizeof(double), '\0');
  if (rm.size()) std::memcpy(bytes.data(), rm.data(), bytes.size());
  return bytes;
}

Mat<double> from_row_major(const std::string& bytes, Eigen::Index rows, Eigen::Index cols) {
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * sizeof(double))
    throw CheckpointError("parameter byte count does not match its shape");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  if (rm.size()) std::memcpy(rm.data(), bytes.data(), bytes.size());
  return rm;
}

void write_block(std::ostream& out, const std::string& name, const Mat<double>& m, ParamEncoding enc) {
  const std::string bytes = row_major_bytes(m);
  out << "param " << name << ' ' << m.rows() << ' ' << m.cols() << ' ' << bytes.size() << '\n';
  if (enc == ParamEncoding::base64) out << base64_encode(bytes) << '\n';
  else out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())) << '\n';
}

std::string next_line(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError("truncated checkpoint");
  return line;
}

std::string after_key(const std::string& line, const std::string& key) {
  if (!starts_with(line, key + " ")) throw CheckpointError("expected '" + key + "' line");
  return line.substr(key.size() + 1);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path, ParamEncoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out << kCheckpointHeader << '\n';
  out << "kind " << ckpt.kind << '\n';
  out << "encoding " << (encoding == ParamEncoding::base64 ? "base64" : "binary") << '\n';
  out << "config " << ckpt.config.to_json().dump() << '\n';
  out << "vocab " << nlohmann::json(ckpt.vocab.tokens()).dump() << '\n';
  out << "meta " << ckpt.meta.dump() << '\n';
  if (ckpt.policy) {
    const auto& s = ckpt.policy->shape();
    out << "shape " << s.dim << ' ' << s.hidden << ' ' << s.vocab << ' ' << s.max_len << '\n';
    for (const auto& [name, m] : ckpt.policy->params.blocks()) write_block(out, name, *m, encoding);
  }
  if (ckpt.reward) {
    write_block(out, "reward.w", ckpt.reward->w, encoding);
    write_block(out, "reward.b", Mat<double>::Constant(1, 1, ckpt.reward->b), encoding);
  }
  out << "end\n";
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  if (next_line(in) != kCheckpointHeader) throw CheckpointError("not an " + std::string(kCheckpointHeader) + " file");
  Checkpoint c;
  c.kind = after_key(next_line(in), "kind");
  const std::string enc = after_key(next_line(in), "encoding");
  if (enc != "base64" && enc != "binary") throw CheckpointError("unknown encoding " + enc);
  try {
    c.config = TrainConfig::from_json(nlohmann::json::parse(after_key(next_line(in), "config")), TrainConfig{});
    c.vocab = TokenVocab::from_tokens(nlohmann::json::parse(after_key(next_line(in), "vocab")).get<std::vector<std::string>>());
    c.meta = nlohmann::ordered_json::parse(after_key(next_line(in), "meta"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }

  std::map<std::string, Mat<double>> blocks;
  std::optional<PolicyShape> shape;
  for (std::string line = next_line(in); line != "end"; line = next_line(in)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "shape") {
      PolicyShape s;
      if (!(ls >> s.dim >> s.hidden >> s.vocab >> s.max_len)) throw CheckpointError("bad shape line");
      shape = s;
      continue;
    }
    if (tag != "param") throw CheckpointError("unexpected line '" + line + "'");
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    std::size_t nbytes = 0;
    if (!(ls >> name >> rows >> cols >> nbytes)) throw CheckpointError("bad param line");
    std::string bytes;
    if (enc == "base64") {
      bytes = base64_decode(next_line(in));
    } else {
      bytes.resize(nbytes);
      if (!in.read(bytes.data(), static_cast<std::streamsize>(nbytes))) throw CheckpointError("truncated parameter");
      next_line(in);
    }
    blocks[name] = from_row_major(bytes, rows, cols);
  }

  auto take = [&](const std::string& name) {
    auto it = blocks.find(name);
    if (it == blocks.end()) throw CheckpointError("missing parameter " + name);
    return it->second;
  };
  if (shape) {
    Policy p(*shape, 0);
    for (auto& [name, m] : p.params.blocks()) {
      Mat<double> v = take(name);
      if (v.rows() != m->rows() || v.cols() != m->cols()) throw CheckpointError("shape mismatch for " + name);
      *m = std::move(v);
    }
    c.policy = std::move(p);
  }
  if (blocks.contains("reward.w")) {
    const Mat<double> w = take("reward.w");
    Reward r(static_cast<int>(w.rows()));
    r.w = w.col(0);
    r.b = take("reward.b")(0, 0);
    c.reward = std::move(r);
  }
  return c;
}

}  // namespace octo::learn
