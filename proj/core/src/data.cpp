#include "iclkit/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace iclkit {

namespace fs = std::filesystem;

std::vector<int> Dataset::distinct_labels() const {
  std::set<int> s(ys.begin(), ys.end());
  return std::vector<int>(s.begin(), s.end());
}

std::map<int, int> Dataset::class_counts() const {
  std::map<int, int> out;
  for (int y : ys) out[y] += 1;
  return out;
}

void SkewSpec::validate() const {
  require(!proportions.empty(), ErrorKind::config, "skew spec needs class proportions");
  double sum = 0.0;
  for (double p : proportions) {
    require(p > 0.0, ErrorKind::config, "class proportions must be positive");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-9, ErrorKind::config,
          "class proportions must sum to 1");
  require(total_samples >= 1, ErrorKind::config, "total_samples must be >= 1");
  require(difficulty >= 0.0 && difficulty <= 1.0, ErrorKind::config,
          "difficulty must be in [0,1]");
  if (image_mode)
    require(image_shape.pixels() > 0, ErrorKind::config, "bad image shape");
  else
    require(feature_dim >= 1, ErrorKind::config, "feature_dim must be >= 1");
  for (int n : class_counts())
    require(n >= min_per_class, ErrorKind::config,
            "a class would receive " + std::to_string(n) + " samples; at least " +
                std::to_string(min_per_class) +
                " are required for memory selection and testing");
}

std::vector<int> SkewSpec::class_counts() const {
  const int c = static_cast<int>(proportions.size());
  std::vector<int> counts(c);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int i = 0; i < c; ++i) {
    double target = proportions[i] * total_samples;
    counts[i] = static_cast<int>(std::floor(target));
    assigned += counts[i];
    remainders.push_back({target - counts[i], i});
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int j = 0; j < total_samples - assigned; ++j) counts[remainders[j].second] += 1;
  return counts;
}

namespace {

Eigen::VectorXd unit_direction(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  do {
    for (int i = 0; i < dim; ++i) v(i) = normal(rng);
  } while (v.norm() < 1e-9);
  return v / v.norm();
}

}  // namespace

Dataset generate_skewed(const SkewSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int num_classes = static_cast<int>(spec.proportions.size());
  std::vector<int> counts = spec.class_counts();

  Dataset out;
  if (!spec.image_mode) {
    out.input = nn::InputSig{false, spec.feature_dim, {}};
    // cluster separation shrinks as difficulty grows (unit noise variance)
    double separation = 6.0 - 4.5 * spec.difficulty;
    std::vector<Eigen::VectorXd> means;
    for (int c = 0; c < num_classes; ++c)
      means.push_back(separation * unit_direction(spec.feature_dim, rng));
    for (int c = 0; c < num_classes; ++c)
      for (int i = 0; i < counts[c]; ++i) {
        Eigen::VectorXd x = means[c];
        for (int k = 0; k < spec.feature_dim; ++k) x(k) += normal(rng);
        out.xs.push_back(std::move(x));
        out.ys.push_back(c);
      }
  } else {
    out.input = nn::InputSig{true, 0, spec.image_shape};
    const auto& sh = spec.image_shape;
    double noise = 0.05 + 0.30 * spec.difficulty;
    std::uniform_real_distribution<double> jitter(-0.4, 0.4);
    double cx = 0.5 * (sh.width - 1);
    for (int c = 0; c < num_classes; ++c) {
      // oriented stripe texture; the horizontal coordinate is mirrored about
      // the image center so the class signature survives flip augmentation
      double angle = 0.5 * M_PI * c / num_classes;
      double freq = 1.5 + (c % 4);
      double base_phase = 2.0 * M_PI * ((c * 5) % 8) / 8.0;
      double dx = std::cos(angle), dy = std::sin(angle);
      for (int i = 0; i < counts[c]; ++i) {
        double phase = base_phase + jitter(rng);
        Eigen::VectorXd x(sh.pixels());
        for (int ch = 0; ch < sh.channels; ++ch)
          for (int yy = 0; yy < sh.height; ++yy)
            for (int xx = 0; xx < sh.width; ++xx) {
              double u = (dx * std::abs(xx - cx) + dy * yy) / sh.width;
              double v = 0.45 * std::sin(2.0 * M_PI * freq * u + phase) +
                         noise * normal(rng);
              x(ch * sh.height * sh.width + yy * sh.width + xx) =
                  std::clamp(v, -1.0, 1.0);
            }
        out.xs.push_back(std::move(x));
        out.ys.push_back(c);
      }
    }
  }
  return out;
}

std::vector<const StoredSample*> IncrementalStream::test_of_classes(
    const std::vector<int>& classes) const {
  std::vector<const StoredSample*> out;
  for (int label : classes) {
    auto it = test_by_class.find(label);
    require(it != test_by_class.end(), ErrorKind::contract,
            "no test set for class " + std::to_string(label));
    for (const auto& s : it->second) out.push_back(&s);
  }
  return out;
}

IncrementalStream make_stream(const Dataset& data, int initial_classes, int per_step,
                              std::uint64_t class_order_seed, double test_fraction,
                              std::uint64_t split_seed) {
  require(data.size() > 0, ErrorKind::contract, "empty dataset");
  require(test_fraction > 0.0 && test_fraction < 1.0, ErrorKind::config,
          "test_fraction must be in (0,1)");
  std::vector<int> labels = data.distinct_labels();
  const int c = static_cast<int>(labels.size());
  require(initial_classes >= 1 && per_step >= 1, ErrorKind::protocol,
          "initial_classes and per_step must be >= 1");
  require(c > initial_classes && (c - initial_classes) % per_step == 0,
          ErrorKind::protocol,
          "cannot split " + std::to_string(c) + " classes as " +
              std::to_string(initial_classes) + " + k*" + std::to_string(per_step));

  // class order depends only on class_order_seed
  std::vector<int> order = labels;
  std::mt19937_64 order_rng(class_order_seed);
  std::shuffle(order.begin(), order.end(), order_rng);

  // split membership depends only on split_seed and the label
  std::map<int, std::vector<int>> train_idx, test_idx;
  for (int label : labels) {
    std::vector<int> idx;
    for (int i = 0; i < data.size(); ++i)
      if (data.ys[i] == label) idx.push_back(i);
    std::mt19937_64 split_rng(split_seed ^ (0x9e3779b97f4a7c15ULL * (label + 1)));
    std::shuffle(idx.begin(), idx.end(), split_rng);
    int n_test =
        std::max(1, static_cast<int>(std::lround(test_fraction * idx.size())));
    require(n_test < static_cast<int>(idx.size()), ErrorKind::protocol,
            "class " + std::to_string(label) + " has too few samples to split");
    test_idx[label] = std::vector<int>(idx.begin(), idx.begin() + n_test);
    train_idx[label] = std::vector<int>(idx.begin() + n_test, idx.end());
    std::sort(test_idx[label].begin(), test_idx[label].end());
    std::sort(train_idx[label].begin(), train_idx[label].end());
  }

  IncrementalStream stream;
  stream.input = data.input;
  stream.protocol = Protocol{initial_classes, per_step};
  stream.class_order = order;
  stream.class_order_seed = class_order_seed;

  int t = 1;
  std::size_t cursor = 0;
  while (cursor < order.size()) {
    int take = t == 1 ? initial_classes : per_step;
    StepData step;
    step.classes.assign(order.begin() + cursor, order.begin() + cursor + take);
    for (int label : step.classes)
      for (int i : train_idx[label])
        step.train.push_back(StoredSample{data.xs[i], label, Provenance{t, i}});
    stream.steps.push_back(std::move(step));
    cursor += take;
    ++t;
  }
  for (int label : labels) {
    std::vector<StoredSample> tests;
    for (int i : test_idx[label])
      tests.push_back(StoredSample{data.xs[i], label, Provenance{0, i}});
    stream.test_by_class[label] = std::move(tests);
  }
  return stream;
}

Eigen::VectorXd flip_horizontal(const Eigen::VectorXd& x, const ad::ImageShape& shape) {
  require(x.size() == shape.pixels(), ErrorKind::shape, "flip: pixel count mismatch");
  Eigen::VectorXd out(x.size());
  for (int c = 0; c < shape.channels; ++c)
    for (int y = 0; y < shape.height; ++y)
      for (int xx = 0; xx < shape.width; ++xx)
        out(c * shape.height * shape.width + y * shape.width + xx) =
            x(c * shape.height * shape.width + y * shape.width +
              (shape.width - 1 - xx));
  return out;
}

Eigen::VectorXd shift_image(const Eigen::VectorXd& x, const ad::ImageShape& shape, int dy,
                            int dx) {
  require(x.size() == shape.pixels(), ErrorKind::shape, "shift: pixel count mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
  for (int c = 0; c < shape.channels; ++c)
    for (int y = 0; y < shape.height; ++y) {
      int sy = y - dy;
      if (sy < 0 || sy >= shape.height) continue;
      for (int xx = 0; xx < shape.width; ++xx) {
        int sx = xx - dx;
        if (sx < 0 || sx >= shape.width) continue;
        out(c * shape.height * shape.width + y * shape.width + xx) =
            x(c * shape.height * shape.width + sy * shape.width + sx);
      }
    }
  return out;
}

Eigen::VectorXd augment(const Eigen::VectorXd& x, const nn::InputSig& input,
                        std::mt19937_64& rng) {
  if (!input.is_image) return x;
  Eigen::VectorXd out = x;
  std::bernoulli_distribution coin(0.5);
  if (coin(rng)) out = flip_horizontal(out, input.shape);
  int pad_y = std::max(1, static_cast<int>(std::lround(0.1 * input.shape.height)));
  int pad_x = std::max(1, static_cast<int>(std::lround(0.1 * input.shape.width)));
  std::uniform_int_distribution<int> oy(-pad_y, pad_y), ox(-pad_x, pad_x);
  return shift_image(out, input.shape, oy(rng), ox(rng));
}

// ---------------------------------------------------------------------------
// ingestion
// ---------------------------------------------------------------------------

namespace {

int read_pnm_token(std::istream& in) {
  // skips whitespace and '#' comments
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v;
  in >> v;
  require(static_cast<bool>(in), ErrorKind::ingest, "malformed PNM header");
  return v;
}

Eigen::VectorXd read_pnm(const fs::path& file, ad::ImageShape& shape_out) {
  std::ifstream in(file, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::ingest, "cannot open " + file.string());
  std::string magic;
  in >> magic;
  bool binary = magic == "P5" || magic == "P6";
  bool ascii = magic == "P2" || magic == "P3";
  require(binary || ascii, ErrorKind::ingest,
          file.string() + ": unsupported image format '" + magic + "' (PGM/PPM expected)");
  int channels = (magic == "P6" || magic == "P3") ? 3 : 1;
  int width = read_pnm_token(in);
  int height = read_pnm_token(in);
  int maxval = read_pnm_token(in);
  require(maxval > 0 && maxval <= 255, ErrorKind::ingest,
          file.string() + ": unsupported max value " + std::to_string(maxval));
  shape_out = ad::ImageShape{channels, height, width};
  Eigen::VectorXd x(shape_out.pixels());
  if (binary) {
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> buf(static_cast<std::size_t>(width) * height * channels);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    require(in.gcount() == static_cast<std::streamsize>(buf.size()), ErrorKind::ingest,
            file.string() + ": truncated pixel data");
    for (int y = 0; y < height; ++y)
      for (int xx = 0; xx < width; ++xx)
        for (int c = 0; c < channels; ++c)
          x(c * height * width + y * width + xx) =
              buf[(static_cast<std::size_t>(y) * width + xx) * channels + c] /
              static_cast<double>(maxval);
  } else {
    for (int y = 0; y < height; ++y)
      for (int xx = 0; xx < width; ++xx)
        for (int c = 0; c < channels; ++c)
          x(c * height * width + y * width + xx) =
              read_pnm_token(in) / static_cast<double>(maxval);
  }
  return x;
}

Dataset ingest_image_folders(const std::string& path) {
  require(fs::is_directory(path), ErrorKind::ingest, path + " is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(path))
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  require(!class_dirs.empty(), ErrorKind::ingest, path + " contains no class folders");

  Dataset out;
  bool first = true;
  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[label]))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    require(!files.empty(), ErrorKind::ingest,
            "class folder " + class_dirs[label].string() + " is empty");
    for (const auto& file : files) {
      ad::ImageShape shape;
      Eigen::VectorXd x = read_pnm(file, shape);
      if (first) {
        out.input = nn::InputSig{true, 0, shape};
        first = false;
      } else {
        require(shape.channels == out.input.shape.channels &&
                    shape.height == out.input.shape.height &&
                    shape.width == out.input.shape.width,
                ErrorKind::ingest, file.string() + ": image dimensions differ");
      }
      out.xs.push_back(std::move(x));
      out.ys.push_back(static_cast<int>(label));
    }
    out.class_names.push_back(class_dirs[label].filename().string());
  }
  return out;
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, delim)) out.push_back(cell);
  if (!line.empty() && line.back() == delim) out.push_back("");
  return out;
}

Dataset ingest_table(const std::string& path, const IngestFormat& format) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::ingest, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::ingest, path + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_line(line, format.delimiter);
  int label_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == format.label_column) label_col = static_cast<int>(i);
  require(label_col >= 0, ErrorKind::ingest,
          path + ": no label column named '" + format.label_column + "'");
  int dim = static_cast<int>(header.size()) - 1;
  require(dim >= 1, ErrorKind::ingest, path + ": no feature columns");

  std::vector<std::string> raw_labels;
  Dataset out;
  out.input = nn::InputSig{false, dim, {}};
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells = split_line(line, format.delimiter);
    require(cells.size() == header.size(), ErrorKind::ingest,
            path + ":" + std::to_string(line_no) + ": wrong column count");
    Eigen::VectorXd x(dim);
    int at = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (static_cast<int>(i) == label_col) continue;
      try {
        std::size_t used = 0;
        x(at) = std::stod(cells[i], &used);
        require(used == cells[i].size(), ErrorKind::ingest, "trailing characters");
      } catch (const Error&) {
        raise(ErrorKind::ingest, path + ":" + std::to_string(line_no) +
                                     ": non-numeric feature '" + cells[i] + "'");
      } catch (const std::exception&) {
        raise(ErrorKind::ingest, path + ":" + std::to_string(line_no) +
                                     ": non-numeric feature '" + cells[i] + "'");
      }
      ++at;
    }
    out.xs.push_back(std::move(x));
    raw_labels.push_back(cells[label_col]);
  }
  require(!out.xs.empty(), ErrorKind::ingest, path + " has no data rows");

  std::vector<std::string> names(raw_labels);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  std::map<std::string, int> label_of;
  for (std::size_t i = 0; i < names.size(); ++i) label_of[names[i]] = static_cast<int>(i);
  for (const auto& s : raw_labels) out.ys.push_back(label_of[s]);
  out.class_names = names;
  return out;
}

}  // namespace

Dataset ingest(const std::string& path, const IngestFormat& format) {
  require(fs::exists(path), ErrorKind::ingest, path + " does not exist");
  switch (format.kind) {
    case IngestFormat::Kind::image_folders: return ingest_image_folders(path);
    case IngestFormat::Kind::delimited_table: return ingest_table(path, format);
  }
  raise(ErrorKind::usage, "unknown ingest format");
}

}  // namespace iclkit
