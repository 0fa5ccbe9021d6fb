#include "flexmod/data.hpp"

#include "flexmod/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace flexmod {

namespace {

void check_synthetic_spec(const SyntheticSpec& spec) {
  if (spec.modalities < 1) throw std::invalid_argument("synthesize: modalities must be >= 1");
  if (spec.classes < 2) throw std::invalid_argument("synthesize: classes must be >= 2");
  if (static_cast<int>(spec.dims.size()) != spec.modalities) {
    throw std::invalid_argument("synthesize: dims must list one width per modality");
  }
  for (int d : spec.dims) {
    if (d < 1) throw std::invalid_argument("synthesize: modality dims must be positive");
  }
  if (static_cast<int>(spec.informativeness.size()) != spec.modalities) {
    throw std::invalid_argument("synthesize: informativeness must list one value per modality");
  }
  for (double w : spec.informativeness) {
    if (w < 0.0 || w > 1.0) {
      throw std::invalid_argument("synthesize: informativeness values must lie in [0, 1]");
    }
  }
  if (spec.samples < spec.classes) {
    throw std::invalid_argument("synthesize: need at least one sample per class");
  }
  if (spec.noise < 0.0) throw std::invalid_argument("synthesize: noise must be nonnegative");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void MultimodalDataset::validate() const {
  if (num_modalities != static_cast<int>(features.size())) {
    throw std::invalid_argument("dataset: modality count does not match feature matrices");
  }
  const int n = size();
  std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
  for (const auto& f : features) {
    if (f.rows != n) throw std::invalid_argument("dataset: feature matrices disagree on sample count");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw std::invalid_argument("dataset: label " + std::to_string(y) + " out of range [0, " +
                                  std::to_string(num_classes) + ")");
    }
    seen[static_cast<std::size_t>(y)] = true;
  }
  for (int k = 0; k < num_classes; ++k) {
    if (!seen[static_cast<std::size_t>(k)]) {
      throw std::invalid_argument("dataset: class " + std::to_string(k) + " has no samples");
    }
  }
}

std::vector<Matrix> synthetic_class_means(const SyntheticSpec& spec, std::uint64_t seed) {
  check_synthetic_spec(spec);
  Rng rng = substream(seed, "data.means");
  std::vector<Matrix> means;
  means.reserve(static_cast<std::size_t>(spec.modalities));
  for (int m = 0; m < spec.modalities; ++m) {
    Matrix mu(spec.classes, spec.dims[m]);
    for (double& x : mu.v) x = rng.normal();
    for (double& x : mu.v) x *= spec.informativeness[m];
    means.push_back(std::move(mu));
  }
  return means;
}

MultimodalDataset synthesize(const SyntheticSpec& spec, std::uint64_t seed) {
  const auto means = synthetic_class_means(spec, seed);
  Rng noise = substream(seed, "data.noise");

  MultimodalDataset ds;
  ds.num_modalities = spec.modalities;
  ds.num_classes = spec.classes;
  ds.labels.resize(static_cast<std::size_t>(spec.samples));
  for (int i = 0; i < spec.samples; ++i) ds.labels[static_cast<std::size_t>(i)] = i % spec.classes;
  for (int m = 0; m < spec.modalities; ++m) {
    Matrix x(spec.samples, spec.dims[m]);
    for (int i = 0; i < spec.samples; ++i) {
      const int k = ds.labels[static_cast<std::size_t>(i)];
      for (int j = 0; j < spec.dims[m]; ++j) {
        x.at(i, j) = means[static_cast<std::size_t>(m)].at(k, j) + spec.noise * noise.normal();
      }
    }
    ds.features.push_back(std::move(x));
  }
  ds.validate();
  return ds;
}

std::vector<ClientShard> partition_dirichlet(const MultimodalDataset& dataset, int clients,
                                             double alpha, std::uint64_t seed) {
  if (clients < 1) throw std::invalid_argument("partition: clients must be >= 1");
  if (alpha <= 0.0) throw std::invalid_argument("partition: alpha must be positive");
  const int n = dataset.size();
  if (n < clients) {
    throw std::invalid_argument("partition: dataset of " + std::to_string(n) +
                                " rows cannot fill " + std::to_string(clients) +
                                " non-empty shards");
  }

  std::vector<std::vector<int>> rows_by_class(static_cast<std::size_t>(dataset.num_classes));
  for (int i = 0; i < n; ++i) {
    rows_by_class[static_cast<std::size_t>(dataset.labels[static_cast<std::size_t>(i)])].push_back(i);
  }

  Rng dir_rng = substream(seed, "partition.dirichlet");
  Rng shuffle_rng = substream(seed, "partition.shuffle");
  std::vector<std::vector<int>> assigned(static_cast<std::size_t>(clients));

  for (auto& rows : rows_by_class) {
    shuffle_rng.shuffle(rows);
    // Dirichlet draw over clients, then largest-remainder apportionment of
    // this class's rows.
    std::vector<double> p(static_cast<std::size_t>(clients));
    double total = 0.0;
    for (double& x : p) {
      x = dir_rng.gamma(alpha);
      total += x;
    }
    for (double& x : p) x /= total;

    const int count = static_cast<int>(rows.size());
    std::vector<int> take(static_cast<std::size_t>(clients));
    std::vector<std::pair<double, int>> remainder(static_cast<std::size_t>(clients));
    int used = 0;
    for (int c = 0; c < clients; ++c) {
      const double exact = p[static_cast<std::size_t>(c)] * count;
      take[static_cast<std::size_t>(c)] = static_cast<int>(std::floor(exact));
      used += take[static_cast<std::size_t>(c)];
      remainder[static_cast<std::size_t>(c)] = {exact - std::floor(exact), c};
    }
    std::sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int i = 0; used < count; ++i, ++used) {
      take[static_cast<std::size_t>(remainder[static_cast<std::size_t>(i % clients)].second)] += 1;
    }
    int cursor = 0;
    for (int c = 0; c < clients; ++c) {
      for (int i = 0; i < take[static_cast<std::size_t>(c)]; ++i) {
        assigned[static_cast<std::size_t>(c)].push_back(rows[static_cast<std::size_t>(cursor++)]);
      }
    }
  }

  // Equal shard sizes: trim over-full shards, pad short ones by resampling
  // their own rows.
  const int target = n / clients;
  Rng trim_rng = substream(seed, "partition.trim");
  Rng pad_rng = substream(seed, "partition.pad");
  std::vector<ClientShard> shards(static_cast<std::size_t>(clients));
  for (int c = 0; c < clients; ++c) {
    auto& rows = assigned[static_cast<std::size_t>(c)];
    if (rows.empty()) {
      throw std::invalid_argument(
          "partition: client " + std::to_string(c) +
          " received no rows; increase alpha or the dataset size");
    }
    if (static_cast<int>(rows.size()) > target) {
      trim_rng.shuffle(rows);
      rows.resize(static_cast<std::size_t>(target));
    } else {
      while (static_cast<int>(rows.size()) < target) {
        rows.push_back(rows[pad_rng.below(rows.size())]);
      }
    }
    std::sort(rows.begin(), rows.end());
    shards[static_cast<std::size_t>(c)] = ClientShard{c, std::move(rows)};
  }
  return shards;
}

MultimodalDataset load_csv(const std::vector<std::string>& paths, const std::string& label_column) {
  if (paths.empty()) throw std::invalid_argument("load_csv: no files given");

  std::vector<std::string> raw_labels;
  MultimodalDataset ds;
  ds.num_modalities = static_cast<int>(paths.size());

  for (std::size_t m = 0; m < paths.size(); ++m) {
    std::ifstream in(paths[m]);
    if (!in) throw std::runtime_error("load_csv: cannot open '" + paths[m] + "'");

    std::string line;
    if (!std::getline(in, line)) {
      throw std::runtime_error("load_csv: '" + paths[m] + "' is empty (header row required)");
    }
    auto header = split_csv_line(line);
    for (auto& h : header) h = trim(h);
    int label_idx = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == label_column) label_idx = static_cast<int>(i);
    }
    if (label_idx < 0) {
      throw std::runtime_error("load_csv: '" + paths[m] + "' has no label column '" +
                               label_column + "'");
    }

    std::vector<double> values;
    std::vector<std::string> labels;
    const int width = static_cast<int>(header.size()) - 1;
    if (width < 1) {
      throw std::runtime_error("load_csv: '" + paths[m] + "' has no feature columns");
    }
    int line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto cells = split_csv_line(line);
      if (cells.size() != header.size()) {
        throw std::runtime_error("load_csv: '" + paths[m] + "' line " + std::to_string(line_no) +
                                 " has " + std::to_string(cells.size()) + " cells, expected " +
                                 std::to_string(header.size()));
      }
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const std::string cell = trim(cells[i]);
        if (static_cast<int>(i) == label_idx) {
          labels.push_back(cell);
          continue;
        }
        double x = 0.0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
        if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
          throw std::runtime_error("load_csv: '" + paths[m] + "' line " + std::to_string(line_no) +
                                   " column '" + header[i] + "': non-numeric cell '" + cell + "'");
        }
        if (!std::isfinite(x)) {
          throw std::runtime_error("load_csv: '" + paths[m] + "' line " + std::to_string(line_no) +
                                   " column '" + header[i] + "': non-finite value '" + cell + "'");
        }
        values.push_back(x);
      }
    }
    const int rows = static_cast<int>(labels.size());
    if (rows == 0) throw std::runtime_error("load_csv: '" + paths[m] + "' has no data rows");

    if (m == 0) {
      raw_labels = labels;
    } else {
      if (static_cast<int>(raw_labels.size()) != rows) {
        throw std::runtime_error("load_csv: '" + paths[m] + "' has " + std::to_string(rows) +
                                 " rows but '" + paths[0] + "' has " +
                                 std::to_string(raw_labels.size()));
      }
      for (int i = 0; i < rows; ++i) {
        if (labels[static_cast<std::size_t>(i)] != raw_labels[static_cast<std::size_t>(i)]) {
          throw std::runtime_error("load_csv: label mismatch at data row " + std::to_string(i + 1) +
                                   " between '" + paths[0] + "' and '" + paths[m] + "'");
        }
      }
    }

    Matrix x(rows, width);
    x.v = std::move(values);
    ds.features.push_back(std::move(x));
  }

  // lexicographic label -> class index
  std::set<std::string> distinct(raw_labels.begin(), raw_labels.end());
  std::map<std::string, int> index;
  for (const auto& name : distinct) index.emplace(name, static_cast<int>(index.size()));
  ds.num_classes = static_cast<int>(index.size());
  if (ds.num_classes < 2) throw std::runtime_error("load_csv: need at least two distinct labels");
  ds.labels.reserve(raw_labels.size());
  for (const auto& name : raw_labels) ds.labels.push_back(index.at(name));
  ds.validate();
  return ds;
}

std::pair<MultimodalDataset, MultimodalDataset> split_validation(const MultimodalDataset& dataset,
                                                                 double fraction,
                                                                 std::uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0) {
    throw std::invalid_argument("split_validation: fraction must lie strictly in (0, 1)");
  }
  std::vector<std::vector<int>> rows_by_class(static_cast<std::size_t>(dataset.num_classes));
  for (int i = 0; i < dataset.size(); ++i) {
    rows_by_class[static_cast<std::size_t>(dataset.labels[static_cast<std::size_t>(i)])].push_back(i);
  }
  Rng rng = substream(seed, "split.validation");
  std::vector<int> val_rows, train_rows;
  for (int k = 0; k < dataset.num_classes; ++k) {
    auto& rows = rows_by_class[static_cast<std::size_t>(k)];
    const int take = static_cast<int>(std::floor(fraction * static_cast<double>(rows.size())));
    if (take < 1) {
      throw std::invalid_argument("split_validation: fraction " + std::to_string(fraction) +
                                  " yields no validation sample for class " + std::to_string(k));
    }
    if (take >= static_cast<int>(rows.size())) {
      throw std::invalid_argument("split_validation: fraction leaves no training sample for class " +
                                  std::to_string(k));
    }
    rng.shuffle(rows);
    for (int i = 0; i < take; ++i) val_rows.push_back(rows[static_cast<std::size_t>(i)]);
    for (std::size_t i = static_cast<std::size_t>(take); i < rows.size(); ++i) {
      train_rows.push_back(rows[i]);
    }
  }
  std::sort(val_rows.begin(), val_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  return {select_rows(dataset, train_rows), select_rows(dataset, val_rows)};
}

MultimodalDataset select_rows(const MultimodalDataset& dataset, const std::vector<int>& rows) {
  MultimodalDataset out;
  out.num_modalities = dataset.num_modalities;
  out.num_classes = dataset.num_classes;
  out.labels.reserve(rows.size());
  for (int r : rows) {
    if (r < 0 || r >= dataset.size()) {
      throw std::invalid_argument("select_rows: row " + std::to_string(r) + " out of range");
    }
    out.labels.push_back(dataset.labels[static_cast<std::size_t>(r)]);
  }
  for (const auto& f : dataset.features) {
    Matrix x(static_cast<int>(rows.size()), f.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double* src = f.row(rows[i]);
      std::copy(src, src + f.cols, x.v.data() + i * static_cast<std::size_t>(f.cols));
    }
    out.features.push_back(std::move(x));
  }
  return out;
}

Tensor modality_batch(const MultimodalDataset& dataset, int modality,
                      const std::vector<int>& rows) {
  const auto& f = dataset.features.at(static_cast<std::size_t>(modality));
  std::vector<double> values;
  values.reserve(rows.size() * static_cast<std::size_t>(f.cols));
  for (int r : rows) {
    const double* src = f.row(r);
    values.insert(values.end(), src, src + f.cols);
  }
  return Tensor::from_values({static_cast<int>(rows.size()), f.cols}, std::move(values));
}

std::vector<int> label_batch(const MultimodalDataset& dataset, const std::vector<int>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(dataset.labels[static_cast<std::size_t>(r)]);
  return out;
}

}  // namespace flexmod
