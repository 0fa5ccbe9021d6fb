#include "flexmod/prototype.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace flexmod {

std::vector<Prototype> local_prototypes(const std::vector<MlpParams>& encoders,
                                        const MultimodalDataset& dataset,
                                        const std::vector<int>& rows) {
  if (rows.empty()) throw std::invalid_argument("local_prototypes: empty shard");
  if (static_cast<int>(encoders.size()) != dataset.num_modalities) {
    throw std::invalid_argument("local_prototypes: encoder count does not match modalities");
  }

  std::vector<Prototype> out;
  for (int m = 0; m < dataset.num_modalities; ++m) {
    Tensor features = forward_mlp(encoders[static_cast<std::size_t>(m)],
                                  modality_batch(dataset, m, rows));
    const int d = features.dim(1);
    std::map<int, std::pair<std::vector<double>, int>> sums;  // class -> (sum, count)
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const int k = dataset.labels[static_cast<std::size_t>(rows[i])];
      auto& [sum, count] = sums.try_emplace(k, std::vector<double>(static_cast<std::size_t>(d), 0.0), 0)
                               .first->second;
      const double* row = features.values().data() + i * static_cast<std::size_t>(d);
      for (int j = 0; j < d; ++j) sum[static_cast<std::size_t>(j)] += row[j];
      ++count;
    }
    for (auto& [k, entry] : sums) {
      auto& [sum, count] = entry;
      for (double& x : sum) x /= static_cast<double>(count);
      out.push_back(Prototype{m, k, std::move(sum)});
    }
  }
  return out;
}

Prototype normalize_prototype(const Prototype& p) {
  double norm = 0.0;
  for (double x : p.vec) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    throw std::runtime_error("normalize_prototype: zero vector for modality " +
                             std::to_string(p.modality + 1) + " class " + std::to_string(p.klass) +
                             " (dead encoder)");
  }
  Prototype out = p;
  for (double& x : out.vec) x /= norm;
  return out;
}

std::vector<Prototype> global_prototypes(const std::vector<std::vector<Prototype>>& per_client,
                                         int modalities, int classes) {
  std::map<std::pair<int, int>, std::pair<std::vector<double>, int>> acc;
  for (const auto& client : per_client) {
    for (const auto& p : client) {
      auto it = acc.find({p.modality, p.klass});
      if (it == acc.end()) {
        acc.emplace(std::make_pair(p.modality, p.klass), std::make_pair(p.vec, 1));
      } else {
        auto& [sum, count] = it->second;
        if (sum.size() != p.vec.size()) {
          throw std::invalid_argument("global_prototypes: prototype lengths disagree");
        }
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += p.vec[i];
        ++count;
      }
    }
  }

  std::string missing;
  for (int m = 0; m < modalities; ++m) {
    for (int k = 0; k < classes; ++k) {
      if (!acc.count({m, k})) {
        missing += (missing.empty() ? "" : ", ") + std::string("(modality ") +
                   std::to_string(m + 1) + ", class " + std::to_string(k) + ")";
      }
    }
  }
  if (!missing.empty()) {
    throw std::runtime_error("global_prototypes: no client reported " + missing);
  }

  std::vector<Prototype> out;
  for (auto& [key, entry] : acc) {
    auto& [sum, count] = entry;
    for (double& x : sum) x /= static_cast<double>(count);
    out.push_back(Prototype{key.first, key.second, std::move(sum)});
  }
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw std::runtime_error("cosine: zero prototype vector (dead encoder)");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double quality_index(const std::vector<std::vector<double>>& prototypes) {
  const int k = static_cast<int>(prototypes.size());
  if (k < 2) throw std::invalid_argument("quality_index: need at least 2 class prototypes");
  double sum = 0.0;
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      if (a == b) continue;
      sum += cosine(prototypes[static_cast<std::size_t>(a)], prototypes[static_cast<std::size_t>(b)]);
    }
  }
  return sum / static_cast<double>(k);
}

std::vector<double> quality_raw(const std::vector<Prototype>& globals, int modalities,
                                int classes) {
  std::vector<double> omega(static_cast<std::size_t>(modalities), 0.0);
  for (int m = 0; m < modalities; ++m) {
    std::vector<std::vector<double>> protos;
    protos.reserve(static_cast<std::size_t>(classes));
    for (const auto& p : globals) {
      if (p.modality == m) protos.push_back(p.vec);
    }
    if (static_cast<int>(protos.size()) != classes) {
      throw std::invalid_argument("quality_raw: modality " + std::to_string(m + 1) + " has " +
                                  std::to_string(protos.size()) + " prototypes, expected " +
                                  std::to_string(classes));
    }
    // negative mean cosine means better-than-orthogonal separation; clamp so
    // the normalized index stays nonnegative
    omega[static_cast<std::size_t>(m)] = std::max(0.0, quality_index(protos));
  }
  return omega;
}

QualityVector normalize_quality(std::vector<double> raw) {
  if (raw.empty()) throw std::invalid_argument("normalize_quality: empty vector");
  double norm = 0.0;
  for (double& x : raw) {
    x = std::max(0.0, x);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) throw std::runtime_error("normalize_quality: all-zero quality vector");
  for (double& x : raw) x /= norm;
  return QualityVector{std::move(raw)};
}

double combination_quality(const QualityVector& q, unsigned mask) {
  if (mask == 0) throw std::invalid_argument("combination_quality: empty combination");
  double sum = 0.0;
  for (std::size_t m = 0; m < q.omega.size(); ++m) {
    if (mask & (1u << m)) sum += q.omega[m];
  }
  if (mask >> q.omega.size()) {
    throw std::invalid_argument("combination_quality: mask references unknown modality");
  }
  return sum;
}

}  // namespace flexmod
