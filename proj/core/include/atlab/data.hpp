#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "atlab/rng.hpp"
#include "atlab/tensor.hpp"

namespace atlab::data {

struct LabeledExample {
  Tensor pixels;  // H x W x C in [0,1]
  int label = 0;
};

Tensor one_hot_label(const LabeledExample& ex, int num_classes);

enum class DatasetName { MNIST, FMNIST, CIFAR10, SYNTH };

struct DatasetSplit {
  DatasetName name = DatasetName::SYNTH;
  int num_classes = 0;
  Shape input_shape;  // H, W, C
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
};

// Raw byte-level image set as parsed from disk, pixels unscaled in 0..255.
struct RawImages {
  int count = 0;
  int rows = 0;
  int cols = 0;
  int channels = 1;
  std::vector<uint8_t> pixels;  // count * rows * cols * channels
  std::vector<uint8_t> labels;  // count
};

// IDX pair (big-endian magics 0x00000803 / 0x00000801). Accepts gzip inputs
// transparently. Parse errors name the byte offset.
RawImages load_idx(const std::string& images_path, const std::string& labels_path);

// CIFAR-10 binary batches: 3073-byte records, channel-major pixels.
RawImages load_cifar_bin(const std::vector<std::string>& paths);

inline float scale_pixel(uint8_t v) { return static_cast<float>(v) / 255.0f; }
inline uint8_t unscale_pixel(float v) { return static_cast<uint8_t>(v * 255.0f + 0.5f); }

// RawImages -> scaled split examples (HWC float in [0,1]).
std::vector<LabeledExample> to_examples(const RawImages& raw);

// First-N class-stratified subsample, preserving file order inside classes.
std::vector<LabeledExample> stratified_head(const std::vector<LabeledExample>& pool, int n, int num_classes);

// Pad 4 / random 32x32 crop / horizontal flip with probability 0.5.
LabeledExample augment_cifar(const LabeledExample& ex, Rng& rng);

// Gaussian class clusters clipped to [0,1]^dim; per_class examples in each of
// train and test. Linearly separable when separation_sigmas * sigma exceeds
// cluster overlap; separation 0 gives overlapping classes.
DatasetSplit synth_blobs(int num_classes, int per_class, int dim, uint64_t seed, float sigma = 0.05f,
                         float separation_sigmas = 6.0f);

// Canonical dataset bindings. Caps are applied stratified; 0 means full set.
DatasetSplit load_mnist(const std::string& dir, int train_cap = 0, int test_cap = 0);
DatasetSplit load_cifar10(const std::string& dir, int train_cap = 0, int test_cap = 0);

// ---- checksum manifest + fetch --------------------------------------------

struct ManifestEntry {
  std::string name;    // destination file name (decompressed)
  std::string sha256;  // hex digest of the decompressed file
  std::string url;     // https source, may end in .gz
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
std::string sha256_hex(const std::vector<uint8_t>& bytes);
std::string sha256_file(const std::string& path);

// Downloads every entry missing from dir, decompresses, verifies checksums.
// Pre-placed files that already verify are left untouched.
void fetch_datasets(const std::vector<ManifestEntry>& manifest, const std::string& dir);

// Verifies pre-placed files against the manifest; returns names that failed.
std::vector<std::string> verify_datasets(const std::vector<ManifestEntry>& manifest, const std::string& dir);

std::vector<uint8_t> read_file_bytes(const std::string& path);
std::vector<uint8_t> read_file_maybe_gz(const std::string& path);

// Dataset cache directory: ATLAB_DATA_DIR env override, else ./data.
std::string default_data_dir();

}  // namespace atlab::data
