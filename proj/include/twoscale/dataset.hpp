#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "twoscale/error.hpp"
#include "twoscale/rng.hpp"
#include "twoscale/tensor.hpp"

namespace twoscale {

enum class Split { Train, Test };

// An immutable labeled set of input tensors. Fine labels are class indices
// 0..K-1; coarse labels (super-classes) are present only for datasets that
// define them.
struct Dataset {
  std::vector<Tensor> objects;
  std::vector<int> fine_labels;
  std::vector<int> coarse_labels;
  std::size_t class_count = 0;
  std::size_t coarse_class_count = 0;
  Split split = Split::Train;

  std::size_t size() const { return objects.size(); }
  bool has_coarse() const { return !coarse_labels.empty(); }

  void validate() const {
    if (objects.empty()) throw InvalidInput("dataset: empty");
    if (fine_labels.size() != objects.size()) {
      throw InvalidInput("dataset: " + std::to_string(objects.size()) + " objects vs " +
                         std::to_string(fine_labels.size()) + " labels");
    }
    if (has_coarse() && coarse_labels.size() != objects.size()) {
      throw InvalidInput("dataset: coarse label count mismatch");
    }
    for (int l : fine_labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= class_count) {
        throw InvalidInput("dataset: label " + std::to_string(l) + " outside 0.." +
                           std::to_string(class_count - 1));
      }
    }
  }

  // Derives the fine-class -> coarse-class map from the stored label pairs.
  // Every fine class must appear and map to exactly one coarse class.
  std::vector<int> fine_to_coarse() const {
    if (!has_coarse()) throw InvalidConfig("fine_to_coarse: dataset has no coarse labels");
    std::vector<int> map(class_count, -1);
    for (std::size_t i = 0; i < fine_labels.size(); ++i) {
      const int f = fine_labels[i];
      const int c = coarse_labels[i];
      if (map[f] == -1) {
        map[f] = c;
      } else if (map[f] != c) {
        throw InvalidConfig("fine_to_coarse: fine class " + std::to_string(f) +
                            " maps to both coarse " + std::to_string(map[f]) + " and " +
                            std::to_string(c));
      }
    }
    for (std::size_t f = 0; f < map.size(); ++f) {
      if (map[f] == -1) {
        throw InvalidConfig("fine_to_coarse: fine class " + std::to_string(f) +
                            " never appears");
      }
    }
    return map;
  }
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  return data;
}

inline std::uint32_t be32(const std::vector<std::uint8_t>& d, std::size_t off,
                          const std::string& what) {
  if (off + 4 > d.size()) {
    throw ParseError(what + ": truncated at offset " + std::to_string(off) +
                     " (need 4 bytes, file has " + std::to_string(d.size()) + ")");
  }
  return (std::uint32_t(d[off]) << 24) | (std::uint32_t(d[off + 1]) << 16) |
         (std::uint32_t(d[off + 2]) << 8) | std::uint32_t(d[off + 3]);
}

inline void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

inline std::uint8_t pixel_byte(double v, const std::string& what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw InvalidInput(what + ": pixel value " + std::to_string(v) + " outside [0,1]");
  }
  return static_cast<std::uint8_t>(v * 255.0 + 0.5);
}

}  // namespace detail

// Parses the classic IDX pair (big-endian magic 0x00000803 for images,
// 0x00000801 for labels). Pixels are mapped to [0,1] by dividing by 255;
// labels must be digits 0..9.
inline Dataset load_mnist(const std::filesystem::path& images_path,
                          const std::filesystem::path& labels_path,
                          Split split = Split::Train) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);
  const std::string iw = "images file " + images_path.string();
  const std::string lw = "labels file " + labels_path.string();

  const std::uint32_t imagic = detail::be32(img, 0, iw);
  if (imagic != 0x00000803u) {
    throw ParseError(iw + ": bad magic 0x" + std::to_string(imagic) +
                     " at offset 0 (want 0x00000803)");
  }
  const std::uint32_t n = detail::be32(img, 4, iw);
  const std::uint32_t rows = detail::be32(img, 8, iw);
  const std::uint32_t cols = detail::be32(img, 12, iw);
  if (rows == 0 || cols == 0 || n == 0) throw ParseError(iw + ": zero dimension in header");
  const std::size_t pixels = std::size_t(rows) * cols;
  if (img.size() != 16 + std::size_t(n) * pixels) {
    throw ParseError(iw + ": expected " + std::to_string(16 + std::size_t(n) * pixels) +
                     " bytes for " + std::to_string(n) + " images, got " +
                     std::to_string(img.size()));
  }

  const std::uint32_t lmagic = detail::be32(lab, 0, lw);
  if (lmagic != 0x00000801u) {
    throw ParseError(lw + ": bad magic 0x" + std::to_string(lmagic) +
                     " at offset 0 (want 0x00000801)");
  }
  const std::uint32_t ln = detail::be32(lab, 4, lw);
  if (ln != n) {
    throw ParseError("count mismatch: " + std::to_string(n) + " images in " +
                     images_path.string() + " vs " + std::to_string(ln) + " labels in " +
                     labels_path.string());
  }
  if (lab.size() != 8 + std::size_t(ln)) {
    throw ParseError(lw + ": expected " + std::to_string(8 + std::size_t(ln)) +
                     " bytes, got " + std::to_string(lab.size()));
  }

  Dataset ds;
  ds.split = split;
  ds.class_count = 10;
  ds.objects.reserve(n);
  ds.fine_labels.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::vector<double> values(pixels);
    const std::size_t base = 16 + std::size_t(i) * pixels;
    for (std::size_t p = 0; p < pixels; ++p) values[p] = img[base + p] / 255.0;
    ds.objects.emplace_back(std::vector<std::size_t>{rows, cols}, std::move(values));
    const std::uint8_t l = lab[8 + i];
    if (l > 9) {
      throw ParseError(lw + ": label " + std::to_string(int(l)) + " at offset " +
                       std::to_string(8 + i) + " outside 0..9");
    }
    ds.fine_labels.push_back(int(l));
  }
  return ds;
}

// Writes an IDX image/label pair; the exact inverse of load_mnist for
// pixel values of the form k/255.
inline void write_mnist(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, const Dataset& ds) {
  ds.validate();
  const auto& shape = ds.objects.front().shape;
  if (shape.size() != 2) throw InvalidInput("write_mnist: objects must be rank-2");
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw InvalidInput("write_mnist: cannot open " + images_path.string());
  detail::put_be32(img, 0x00000803u);
  detail::put_be32(img, static_cast<std::uint32_t>(ds.size()));
  detail::put_be32(img, static_cast<std::uint32_t>(shape[0]));
  detail::put_be32(img, static_cast<std::uint32_t>(shape[1]));
  for (const Tensor& t : ds.objects) {
    if (t.shape != shape) throw InvalidInput("write_mnist: mixed image shapes");
    for (double v : t.values) {
      const std::uint8_t b = detail::pixel_byte(v, "write_mnist");
      img.put(static_cast<char>(b));
    }
  }
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw InvalidInput("write_mnist: cannot open " + labels_path.string());
  detail::put_be32(lab, 0x00000801u);
  detail::put_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int l : ds.fine_labels) lab.put(static_cast<char>(l));
}

// CIFAR-10 binary batches: 3073-byte records, a label byte followed by 3072
// pixel bytes in channel-major R,G,B order for a 32x32 image.
inline Dataset load_cifar10(const std::vector<std::filesystem::path>& batch_paths,
                            Split split = Split::Train) {
  if (batch_paths.empty()) throw InvalidInput("load_cifar10: no batch files");
  constexpr std::size_t kRecord = 3073;
  Dataset ds;
  ds.split = split;
  ds.class_count = 10;
  for (const auto& path : batch_paths) {
    const auto data = detail::read_file(path);
    const std::string w = "cifar10 file " + path.string();
    if (data.empty() || data.size() % kRecord != 0) {
      throw ParseError(w + ": size " + std::to_string(data.size()) +
                       " is not a positive multiple of " + std::to_string(kRecord));
    }
    const std::size_t n = data.size() / kRecord;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = i * kRecord;
      const std::uint8_t label = data[base];
      if (label > 9) {
        throw ParseError(w + ": label " + std::to_string(int(label)) + " at offset " +
                         std::to_string(base) + " outside 0..9");
      }
      std::vector<double> values(3072);
      for (std::size_t p = 0; p < 3072; ++p) values[p] = data[base + 1 + p] / 255.0;
      ds.objects.emplace_back(std::vector<std::size_t>{3, 32, 32}, std::move(values));
      ds.fine_labels.push_back(int(label));
    }
  }
  return ds;
}

inline void write_cifar10(const std::filesystem::path& path, const Dataset& ds) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("write_cifar10: cannot open " + path.string());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Tensor& t = ds.objects[i];
    if (t.shape != std::vector<std::size_t>{3, 32, 32}) {
      throw InvalidInput("write_cifar10: objects must be (3, 32, 32)");
    }
    out.put(static_cast<char>(ds.fine_labels[i]));
    for (double v : t.values) out.put(static_cast<char>(detail::pixel_byte(v, "write_cifar10")));
  }
}

// CIFAR-100 binary: 3074-byte records, a coarse label byte and a fine label
// byte followed by the 3072 pixel bytes.
inline Dataset load_cifar100(const std::filesystem::path& path, Split split = Split::Train) {
  constexpr std::size_t kRecord = 3074;
  const auto data = detail::read_file(path);
  const std::string w = "cifar100 file " + path.string();
  if (data.empty() || data.size() % kRecord != 0) {
    throw ParseError(w + ": size " + std::to_string(data.size()) +
                     " is not a positive multiple of " + std::to_string(kRecord));
  }
  Dataset ds;
  ds.split = split;
  ds.class_count = 100;
  ds.coarse_class_count = 20;
  const std::size_t n = data.size() / kRecord;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = i * kRecord;
    const std::uint8_t coarse = data[base];
    const std::uint8_t fine = data[base + 1];
    if (coarse > 19) {
      throw ParseError(w + ": coarse label " + std::to_string(int(coarse)) + " at offset " +
                       std::to_string(base) + " outside 0..19");
    }
    if (fine > 99) {
      throw ParseError(w + ": fine label " + std::to_string(int(fine)) + " at offset " +
                       std::to_string(base + 1) + " outside 0..99");
    }
    std::vector<double> values(3072);
    for (std::size_t p = 0; p < 3072; ++p) values[p] = data[base + 2 + p] / 255.0;
    ds.objects.emplace_back(std::vector<std::size_t>{3, 32, 32}, std::move(values));
    ds.coarse_labels.push_back(int(coarse));
    ds.fine_labels.push_back(int(fine));
  }
  return ds;
}

inline void write_cifar100(const std::filesystem::path& path, const Dataset& ds) {
  ds.validate();
  if (!ds.has_coarse()) throw InvalidInput("write_cifar100: dataset has no coarse labels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("write_cifar100: cannot open " + path.string());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Tensor& t = ds.objects[i];
    if (t.shape != std::vector<std::size_t>{3, 32, 32}) {
      throw InvalidInput("write_cifar100: objects must be (3, 32, 32)");
    }
    out.put(static_cast<char>(ds.coarse_labels[i]));
    out.put(static_cast<char>(ds.fine_labels[i]));
    for (double v : t.values) out.put(static_cast<char>(detail::pixel_byte(v, "write_cifar100")));
  }
}

// Gaussian blobs around K well-separated centers: a fast deterministic
// stand-in dataset. Train and test are disjoint draws from the same blobs;
// the test split holds max(1, n/4) objects per class.
inline std::pair<Dataset, Dataset> synthetic_blobs(std::size_t classes, std::size_t per_class,
                                                   std::size_t dim, double spread,
                                                   std::uint64_t seed) {
  if (classes < 2) throw InvalidInput("synthetic_blobs: need at least 2 classes");
  if (per_class == 0) throw InvalidInput("synthetic_blobs: need at least 1 object per class");
  if (dim == 0) throw InvalidInput("synthetic_blobs: dimension must be positive");
  if (!(spread >= 0.0)) throw InvalidInput("synthetic_blobs: spread must be nonnegative");

  // The first min(K, d) centers sit on scaled coordinate axes; any extra
  // classes get random unit directions.
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim, 0.0));
  Rng center_rng(substream(seed, 0));
  for (std::size_t k = 0; k < classes; ++k) {
    if (k < dim) {
      centers[k][k] = 2.0;
    } else {
      double norm = 0.0;
      while (norm < 1e-9) {
        norm = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
          centers[k][j] = center_rng.gaussian();
          norm += centers[k][j] * centers[k][j];
        }
        norm = std::sqrt(norm);
      }
      for (std::size_t j = 0; j < dim; ++j) centers[k][j] *= 2.0 / norm;
    }
  }

  Rng draw_rng(substream(seed, 1));
  const auto draw_split = [&](std::size_t count, Split split) {
    Dataset ds;
    ds.split = split;
    ds.class_count = classes;
    for (std::size_t k = 0; k < classes; ++k) {
      for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> x(dim);
        for (std::size_t j = 0; j < dim; ++j) x[j] = centers[k][j] + spread * draw_rng.gaussian();
        ds.objects.emplace_back(std::vector<std::size_t>{dim}, std::move(x));
        ds.fine_labels.push_back(static_cast<int>(k));
      }
    }
    return ds;
  };

  Dataset train = draw_split(per_class, Split::Train);
  Dataset test = draw_split(std::max<std::size_t>(1, per_class / 4), Split::Test);
  return {std::move(train), std::move(test)};
}

}  // namespace twoscale
