#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "atlab/data.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "atlab/errors.hpp"
#include "httplib.h"

namespace atlab::data {

namespace fs = std::filesystem;

Tensor one_hot_label(const LabeledExample& ex, int num_classes) {
  if (ex.label < 0 || ex.label >= num_classes) throw ContractViolation("label outside [0,K)");
  Tensor t({num_classes});
  t[ex.label] = 1.0f;
  return t;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

namespace {

std::vector<uint8_t> gunzip(const std::vector<uint8_t>& in, const std::string& what) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw DataError("zlib init failed for " + what);
  std::vector<uint8_t> out;
  out.reserve(in.size() * 4);
  std::vector<uint8_t> buf(1 << 16);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buf.data();
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw DataError("gzip decode failed for " + what);
    }
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
  }
  inflateEnd(&zs);
  return out;
}

uint32_t read_be32(const std::vector<uint8_t>& b, size_t off, const std::string& path) {
  if (off + 4 > b.size())
    throw ParseError(path + ": truncated at offset " + std::to_string(off) + " (need 4 bytes)");
  return (static_cast<uint32_t>(b[off]) << 24) | (static_cast<uint32_t>(b[off + 1]) << 16) |
         (static_cast<uint32_t>(b[off + 2]) << 8) | static_cast<uint32_t>(b[off + 3]);
}

}  // namespace

std::vector<uint8_t> read_file_maybe_gz(const std::string& path) {
  std::vector<uint8_t> raw = read_file_bytes(path);
  if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) return gunzip(raw, path);
  return raw;
}

RawImages load_idx(const std::string& images_path, const std::string& labels_path) {
  std::vector<uint8_t> ib = read_file_maybe_gz(images_path);
  std::vector<uint8_t> lb = read_file_maybe_gz(labels_path);
  if (ib.empty()) throw ParseError(images_path + ": empty file (offset 0)");
  if (lb.empty()) throw ParseError(labels_path + ": empty file (offset 0)");

  uint32_t imagic = read_be32(ib, 0, images_path);
  if (imagic != 0x00000803u)
    throw ParseError(images_path + ": bad magic 0x" + [&] {
      char s[16];
      std::snprintf(s, sizeof s, "%08x", imagic);
      return std::string(s);
    }() + " at offset 0 (want 0x00000803)");
  uint32_t lmagic = read_be32(lb, 0, labels_path);
  if (lmagic != 0x00000801u) throw ParseError(labels_path + ": bad magic at offset 0 (want 0x00000801)");

  RawImages out;
  out.count = static_cast<int>(read_be32(ib, 4, images_path));
  out.rows = static_cast<int>(read_be32(ib, 8, images_path));
  out.cols = static_cast<int>(read_be32(ib, 12, images_path));
  uint32_t lcount = read_be32(lb, 4, labels_path);
  if (static_cast<uint32_t>(out.count) != lcount)
    throw ParseError(images_path + ": image count " + std::to_string(out.count) + " != label count " +
                     std::to_string(lcount));
  size_t need = 16 + static_cast<size_t>(out.count) * out.rows * out.cols;
  if (ib.size() != need)
    throw ParseError(images_path + ": expected " + std::to_string(need) + " bytes, got " +
                     std::to_string(ib.size()) + " (truncated at offset " + std::to_string(ib.size()) + ")");
  if (lb.size() != 8 + static_cast<size_t>(out.count))
    throw ParseError(labels_path + ": truncated at offset " + std::to_string(lb.size()));
  out.channels = 1;
  out.pixels.assign(ib.begin() + 16, ib.end());
  out.labels.assign(lb.begin() + 8, lb.end());
  return out;
}

RawImages load_cifar_bin(const std::vector<std::string>& paths) {
  constexpr size_t kRecord = 3073;
  constexpr int kSide = 32;
  RawImages out;
  out.rows = kSide;
  out.cols = kSide;
  out.channels = 3;
  for (const auto& path : paths) {
    std::vector<uint8_t> b = read_file_maybe_gz(path);
    if (b.empty() || b.size() % kRecord != 0)
      throw ParseError(path + ": size " + std::to_string(b.size()) + " is not a multiple of 3073-byte records");
    size_t n = b.size() / kRecord;
    for (size_t r = 0; r < n; ++r) {
      const uint8_t* rec = b.data() + r * kRecord;
      uint8_t label = rec[0];
      if (label > 9)
        throw ParseError(path + ": label byte " + std::to_string(label) + " out of range at record " +
                         std::to_string(r) + " (offset " + std::to_string(r * kRecord) + ")");
      out.labels.push_back(label);
      // channel-major on disk -> interleaved HWC
      for (int h = 0; h < kSide; ++h)
        for (int w = 0; w < kSide; ++w)
          for (int c = 0; c < 3; ++c) out.pixels.push_back(rec[1 + c * 1024 + h * kSide + w]);
      ++out.count;
    }
  }
  return out;
}

std::vector<LabeledExample> to_examples(const RawImages& raw) {
  std::vector<LabeledExample> out;
  out.reserve(static_cast<size_t>(raw.count));
  const size_t stride = static_cast<size_t>(raw.rows) * raw.cols * raw.channels;
  for (int i = 0; i < raw.count; ++i) {
    LabeledExample ex;
    ex.label = raw.labels[static_cast<size_t>(i)];
    ex.pixels = Tensor({raw.rows, raw.cols, raw.channels});
    const uint8_t* src = raw.pixels.data() + static_cast<size_t>(i) * stride;
    for (size_t j = 0; j < stride; ++j) ex.pixels[static_cast<int64_t>(j)] = scale_pixel(src[j]);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<LabeledExample> stratified_head(const std::vector<LabeledExample>& pool, int n, int num_classes) {
  if (n <= 0 || n >= static_cast<int>(pool.size())) return pool;
  std::vector<int> quota(static_cast<size_t>(num_classes), n / num_classes);
  for (int i = 0; i < n % num_classes; ++i) ++quota[static_cast<size_t>(i)];
  std::vector<LabeledExample> out;
  out.reserve(static_cast<size_t>(n));
  for (const auto& ex : pool) {
    if (quota[static_cast<size_t>(ex.label)] > 0) {
      --quota[static_cast<size_t>(ex.label)];
      out.push_back(ex);
      if (static_cast<int>(out.size()) == n) break;
    }
  }
  return out;
}

LabeledExample augment_cifar(const LabeledExample& ex, Rng& rng) {
  const Shape& s = ex.pixels.shape();
  if (s.size() != 3 || s[0] != 32 || s[1] != 32 || s[2] != 3)
    throw ShapeError("augment_cifar: expects 32x32x3, got " + shape_str(s));
  constexpr int pad = 4, side = 32;
  int oy = static_cast<int>(rng.uniform_u32(2 * pad + 1));
  int ox = static_cast<int>(rng.uniform_u32(2 * pad + 1));
  bool flip = rng.bernoulli(0.5f);
  LabeledExample out;
  out.label = ex.label;
  out.pixels = Tensor({side, side, 3});
  for (int h = 0; h < side; ++h)
    for (int w = 0; w < side; ++w) {
      int sh = h + oy - pad;
      int sw = w + ox - pad;
      for (int c = 0; c < 3; ++c) {
        float v = 0.0f;
        if (sh >= 0 && sh < side && sw >= 0 && sw < side)
          v = ex.pixels[(static_cast<int64_t>(sh) * side + sw) * 3 + c];
        int dw = flip ? side - 1 - w : w;
        out.pixels[(static_cast<int64_t>(h) * side + dw) * 3 + c] = v;
      }
    }
  return out;
}

DatasetSplit synth_blobs(int num_classes, int per_class, int dim, uint64_t seed, float sigma,
                         float separation_sigmas) {
  if (num_classes < 2) throw ContractViolation("synth_blobs: needs at least 2 classes");
  Rng rng(seed, 0xb10b5);
  // centers kept away from the walls; rejection keeps pairwise separation
  std::vector<std::vector<float>> centers;
  const float min_dist = separation_sigmas * sigma;
  for (int k = 0; k < num_classes; ++k) {
    for (int attempt = 0;; ++attempt) {
      std::vector<float> c(static_cast<size_t>(dim));
      for (auto& v : c) v = rng.uniform_float(0.2f, 0.8f);
      bool ok = true;
      for (const auto& other : centers) {
        double d2 = 0.0;
        for (int i = 0; i < dim; ++i) {
          double d = c[static_cast<size_t>(i)] - other[static_cast<size_t>(i)];
          d2 += d * d;
        }
        if (std::sqrt(d2) < min_dist) ok = false;
      }
      if (ok || attempt > 10000) {
        centers.push_back(std::move(c));
        break;
      }
    }
  }
  int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim))));
  Shape shape = (side * side == dim) ? Shape{side, side, 1} : Shape{dim, 1, 1};
  auto draw = [&](int cls) {
    LabeledExample ex;
    ex.label = cls;
    ex.pixels = Tensor(shape);
    for (int i = 0; i < dim; ++i) {
      float v = centers[static_cast<size_t>(cls)][static_cast<size_t>(i)] + sigma * rng.gaussian();
      ex.pixels[i] = std::min(1.0f, std::max(0.0f, v));
    }
    return ex;
  };
  DatasetSplit split;
  split.name = DatasetName::SYNTH;
  split.num_classes = num_classes;
  split.input_shape = shape;
  for (int k = 0; k < num_classes; ++k)
    for (int i = 0; i < per_class; ++i) split.train.push_back(draw(k));
  for (int k = 0; k < num_classes; ++k)
    for (int i = 0; i < per_class; ++i) split.test.push_back(draw(k));
  return split;
}

namespace {

std::string pick_existing(const std::string& dir, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    fs::path p = fs::path(dir) / n;
    if (fs::exists(p)) return p.string();
  }
  throw DataError("missing dataset file in " + dir + " (looked for " + std::string(*names.begin()) +
                  "); run the data fetch command or pre-place the files");
}

}  // namespace

DatasetSplit load_mnist(const std::string& dir, int train_cap, int test_cap) {
  RawImages train = load_idx(pick_existing(dir, {"train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"}),
                             pick_existing(dir, {"train-labels-idx1-ubyte", "train-labels-idx1-ubyte.gz"}));
  RawImages test = load_idx(pick_existing(dir, {"t10k-images-idx3-ubyte", "t10k-images-idx3-ubyte.gz"}),
                            pick_existing(dir, {"t10k-labels-idx1-ubyte", "t10k-labels-idx1-ubyte.gz"}));
  DatasetSplit split;
  split.name = DatasetName::MNIST;
  split.num_classes = 10;
  split.input_shape = {train.rows, train.cols, 1};
  split.train = stratified_head(to_examples(train), train_cap, 10);
  split.test = stratified_head(to_examples(test), test_cap, 10);
  return split;
}

DatasetSplit load_cifar10(const std::string& dir, int train_cap, int test_cap) {
  std::vector<std::string> train_paths;
  for (int i = 1; i <= 5; ++i) {
    fs::path p = fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin");
    if (!fs::exists(p)) throw DataError("missing dataset file " + p.string());
    train_paths.push_back(p.string());
  }
  RawImages train = load_cifar_bin(train_paths);
  RawImages test = load_cifar_bin({pick_existing(dir, {"test_batch.bin"})});
  DatasetSplit split;
  split.name = DatasetName::CIFAR10;
  split.num_classes = 10;
  split.input_shape = {32, 32, 3};
  split.train = stratified_head(to_examples(train), train_cap, 10);
  split.test = stratified_head(to_examples(test), test_cap, 10);
  return split;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    ManifestEntry e;
    if (!(is >> e.name >> e.sha256 >> e.url))
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 'name sha256 url'");
    out.push_back(std::move(e));
  }
  return out;
}

std::string sha256_hex(const std::vector<uint8_t>& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr))
    throw Error("sha256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::string& path) { return sha256_hex(read_file_bytes(path)); }

namespace {

std::vector<uint8_t> https_get(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw DataError("bad url " + url);
  std::string rest = url.substr(scheme_end + 3);
  auto slash = rest.find('/');
  std::string host = rest.substr(0, slash);
  std::string path = slash == std::string::npos ? "/" : rest.substr(slash);
  httplib::SSLClient cli(host);
  cli.set_follow_location(true);
  cli.set_connection_timeout(30);
  cli.set_read_timeout(120);
  auto res = cli.Get(path);
  if (!res || res->status != 200)
    throw DataError("download failed for " + url + (res ? " (http " + std::to_string(res->status) + ")" : ""));
  return std::vector<uint8_t>(res->body.begin(), res->body.end());
}

bool verifies(const ManifestEntry& e, const std::string& dir) {
  fs::path p = fs::path(dir) / e.name;
  if (!fs::exists(p)) {
    fs::path gz = fs::path(dir) / (e.name + ".gz");
    if (!fs::exists(gz)) return false;
    return sha256_hex(read_file_maybe_gz(gz.string())) == e.sha256;
  }
  return sha256_hex(read_file_maybe_gz(p.string())) == e.sha256;
}

}  // namespace

void fetch_datasets(const std::vector<ManifestEntry>& manifest, const std::string& dir) {
  fs::create_directories(dir);
  for (const auto& e : manifest) {
    if (verifies(e, dir)) continue;
    std::vector<uint8_t> body = https_get(e.url);
    if (body.size() >= 2 && body[0] == 0x1f && body[1] == 0x8b) body = gunzip(body, e.url);
    std::string got = sha256_hex(body);
    if (got != e.sha256)
      throw DataError("checksum mismatch for " + e.name + ": got " + got + ", manifest says " + e.sha256);
    fs::create_directories((fs::path(dir) / e.name).parent_path());
    std::ofstream out(fs::path(dir) / e.name, std::ios::binary);
    out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  }
}

std::vector<std::string> verify_datasets(const std::vector<ManifestEntry>& manifest, const std::string& dir) {
  std::vector<std::string> failed;
  for (const auto& e : manifest)
    if (!verifies(e, dir)) failed.push_back(e.name);
  return failed;
}

std::string default_data_dir() {
  if (const char* env = std::getenv("ATLAB_DATA_DIR")) return env;
  return "data";
}

}  // namespace atlab::data
