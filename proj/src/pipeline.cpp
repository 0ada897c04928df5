#include "iboss/pipeline.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "iboss/errors.hpp"
#include "iboss/estimation.hpp"
#include "iboss/io.hpp"
#include "iboss/rng.hpp"

namespace iboss {
namespace {

int resolve_threads(int requested) {
#ifdef _OPENMP
  return requested > 0 ? requested : omp_get_max_threads();
#else
  (void)requested;
  return 1;
#endif
}

void check_blocks(std::span<const DataBlock> blocks, const DncParams& params) {
  if (blocks.empty()) throw OtherError("no blocks to process");
  if (params.B != static_cast<int>(blocks.size())) {
    throw OtherError("params declare B = " + std::to_string(params.B) +
                     " but " + std::to_string(blocks.size()) +
                     " blocks were given");
  }
  const int p = blocks[0].p();
  for (const auto& b : blocks) {
    if (b.p() != p) {
      throw FormatError("block " + std::to_string(b.block_index) +
                        " has a different covariate count");
    }
  }
}

// Map over blocks, collecting one result per block. Results land in a
// pre-sized vector indexed by block, so downstream reductions are ordered
// and identical no matter how many threads ran the map.
template <typename Fn>
void parallel_block_map(std::int64_t count, int max_threads, Fn&& fn) {
  const int threads = resolve_threads(max_threads);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#endif
  for (std::int64_t i = 0; i < count; ++i) fn(i);
  (void)threads;
}

SelectionResult merge_selections(std::span<const DataBlock> blocks,
                                 std::vector<SelectionResult>& parts,
                                 std::int64_t k, SelectionNotes* notes,
                                 std::vector<SelectionNotes>& part_notes) {
  SelectionResult merged;
  merged.requested_k = k;
  const int p = blocks[0].p();
  merged.per_covariate_counts.assign(static_cast<std::size_t>(p), {0, 0});
  std::size_t total = 0;
  for (const auto& part : parts) total += part.indices.size();
  merged.indices.reserve(total);
  for (std::size_t b = 0; b < parts.size(); ++b) {
    const auto& part = parts[b];
    merged.indices.insert(merged.indices.end(), part.indices.begin(),
                          part.indices.end());
    for (std::size_t j = 0; j < part.per_covariate_counts.size(); ++j) {
      merged.per_covariate_counts[j].first += part.per_covariate_counts[j].first;
      merged.per_covariate_counts[j].second += part.per_covariate_counts[j].second;
    }
    if (notes != nullptr) {
      for (int j : part_notes[b].degenerate_covariates) {
        notes->degenerate_covariates.push_back(j);
      }
    }
  }
  if (!std::is_sorted(merged.indices.begin(), merged.indices.end())) {
    std::sort(merged.indices.begin(), merged.indices.end());
  }
  return merged;
}

template <bool Parallel>
SelectionResult dnc_select_impl(std::span<const DataBlock> blocks,
                                const DncParams& params, SelectionNotes* notes) {
  check_blocks(blocks, params);
  const int p = blocks[0].p();
  dnc_quota(params.k, p, params.B);  // aborts before any block is touched
  const std::int64_t k_b = dnc_block_k(params.k, params.B);
  for (const auto& b : blocks) {
    if (b.rows() < k_b) throw BlockTooSmall(b.block_index, b.rows(), k_b);
  }

  std::vector<SelectionResult> parts(blocks.size());
  std::vector<SelectionNotes> part_notes(blocks.size());
  if constexpr (Parallel) {
    parallel_block_map(static_cast<std::int64_t>(blocks.size()),
                       params.max_threads, [&](std::int64_t i) {
                         parts[static_cast<std::size_t>(i)] = iboss_select(
                             blocks[static_cast<std::size_t>(i)], k_b,
                             &part_notes[static_cast<std::size_t>(i)]);
                       });
  } else {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      parts[i] = iboss_select(blocks[i], k_b, &part_notes[i]);
    }
  }
  return merge_selections(blocks, parts, params.k, notes, part_notes);
}

}  // namespace

std::int64_t dnc_block_k(std::int64_t k, int B) {
  if (k < 1) throw QuotaError("subdata size k must be positive");
  if (B < 1) throw QuotaError("partition count B must be positive");
  return ceil_div(k, B);
}

std::int64_t dnc_quota(std::int64_t k, int p, int B) {
  if (p < 1) throw QuotaError("need at least one covariate");
  const std::int64_t denom = 2 * static_cast<std::int64_t>(p) * B;
  if (k < denom) throw QuotaUnderflow();
  return ceil_div(dnc_block_k(k, B), 2 * static_cast<std::int64_t>(p));
}

std::vector<std::int64_t> shuffle_assignment(std::int64_t n_rows, int B,
                                             std::uint64_t seed) {
  if (B < 1 || B > n_rows) {
    throw OtherError("partition count " + std::to_string(B) +
                     " outside [1, " + std::to_string(n_rows) + "]");
  }
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n_rows));
  std::iota(perm.begin(), perm.end(), std::int64_t{0});
  rng::Stream stream(rng::derive_key(seed, rng::label::kShuffle));
  rng::shuffle(std::span<std::int64_t>(perm), stream);
  return perm;
}

PartitionedData partition_rows(const Matrix& z, const Vector* y, int B,
                               Partitioning partitioning, std::uint64_t seed) {
  const std::int64_t n = z.rows();
  if (y != nullptr && y->size() != n) {
    throw FormatError("response length does not match row count");
  }
  PartitionedData out;
  const std::int64_t n_b = ceil_div(n, static_cast<std::int64_t>(B));

  std::vector<std::int64_t> layout;
  if (partitioning == Partitioning::RandomShuffle) {
    const auto perm = shuffle_assignment(n, B, seed);
    layout.resize(perm.size());
    // Rows keep their source order inside each block, exactly like the
    // streaming splitter that appends rows to block files as it reads.
    std::vector<std::vector<std::int64_t>> members(static_cast<std::size_t>(B));
    for (std::int64_t pos = 0; pos < n; ++pos) {
      members[static_cast<std::size_t>(pos / n_b)].push_back(perm[static_cast<std::size_t>(pos)]);
    }
    std::size_t cursor = 0;
    for (auto& m : members) {
      std::sort(m.begin(), m.end());
      for (std::int64_t src : m) layout[cursor++] = src;
    }
    out.layout_to_source = layout;
  }

  std::int64_t offset = 0;
  int index = 0;
  while (offset < n) {
    const std::int64_t rows = std::min(n_b, n - offset);
    DataBlock block;
    block.block_index = index++;
    block.row_offset = offset;
    block.covariates.resize(rows, z.cols());
    if (y != nullptr) block.responses.resize(rows);
    for (std::int64_t i = 0; i < rows; ++i) {
      const std::int64_t src =
          layout.empty() ? offset + i : layout[static_cast<std::size_t>(offset + i)];
      block.covariates.row(i) = z.row(src);
      if (y != nullptr) block.responses(i) = (*y)(src);
    }
    out.blocks.push_back(std::move(block));
    offset += rows;
  }
  return out;
}

std::vector<std::filesystem::path> shuffle_split_binary(
    const std::filesystem::path& source, int B, std::uint64_t seed,
    const std::filesystem::path& out_dir) {
  const DatasetMeta meta = read_binary_meta(source);
  const std::int64_t n = meta.n_rows;
  const auto perm = shuffle_assignment(n, B, seed);
  const std::int64_t n_b = ceil_div(n, static_cast<std::int64_t>(B));

  // assign[row] = destination block of that source row.
  std::vector<int> assign(static_cast<std::size_t>(n));
  std::vector<std::int64_t> block_rows(static_cast<std::size_t>(B), 0);
  for (std::int64_t pos = 0; pos < n; ++pos) {
    const int b = static_cast<int>(pos / n_b);
    assign[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos)])] = b;
    ++block_rows[static_cast<std::size_t>(b)];
  }

  std::filesystem::create_directories(out_dir);
  const std::size_t w =
      8 * (static_cast<std::size_t>(meta.n_covariates) + (meta.has_response ? 1 : 0));

  std::vector<std::filesystem::path> paths;
  std::vector<std::ofstream> outs;
  outs.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    char suffix[32];
    std::snprintf(suffix, sizeof suffix, "_block_%05d", b);
    auto path = out_dir / (source.stem().string() + suffix +
                           source.extension().string());
    outs.emplace_back(path, std::ios::binary | std::ios::trunc);
    if (!outs.back()) throw IoFailure("cannot create " + path.string());
    DatasetMeta block_meta = meta;
    block_meta.n_rows = block_rows[static_cast<std::size_t>(b)];
    unsigned char header[20];
    std::memcpy(header, kMagic, 4);
    const std::uint16_t version = kFormatVersion;
    const std::uint16_t flags = meta.has_response ? 1 : 0;
    const std::uint64_t rows = static_cast<std::uint64_t>(block_meta.n_rows);
    const std::uint32_t cols = static_cast<std::uint32_t>(meta.n_covariates);
    std::memcpy(header + 4, &version, 2);
    std::memcpy(header + 6, &flags, 2);
    std::memcpy(header + 8, &rows, 8);
    std::memcpy(header + 16, &cols, 4);
    outs.back().write(reinterpret_cast<const char*>(header), sizeof header);
    paths.push_back(std::move(path));
  }

  std::ifstream in(source, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + source.string());
  in.seekg(20);
  std::vector<char> row(w);
  for (std::int64_t i = 0; i < n; ++i) {
    if (!in.read(row.data(), static_cast<std::streamsize>(w))) {
      throw FormatError(source.string() +
                        ": payload shorter than the header's row count");
    }
    outs[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])].write(
        row.data(), static_cast<std::streamsize>(w));
  }
  for (std::size_t b = 0; b < outs.size(); ++b) {
    if (!outs[b]) throw IoFailure("write failed for " + paths[b].string());
  }
  return paths;
}

SelectionResult run_dnc_select(std::span<const DataBlock> blocks,
                               const DncParams& params, SelectionNotes* notes) {
  return dnc_select_impl<true>(blocks, params, notes);
}

SelectionResult run_dnc_select_serial(std::span<const DataBlock> blocks,
                                      const DncParams& params,
                                      SelectionNotes* notes) {
  return dnc_select_impl<false>(blocks, params, notes);
}

AggregatedFit aggregate_inverse_covariance(const std::vector<Matrix>& grams,
                                           const std::vector<Vector>& betas,
                                           const std::vector<double>& sigma2s,
                                           std::vector<OlsFit> fits) {
  const std::size_t n = grams.size();
  if (n == 0 || betas.size() != n || sigma2s.size() != n) {
    throw OtherError("aggregation inputs disagree in length");
  }
  const std::int64_t d = grams[0].rows();
  Matrix weight_sum = Matrix::Zero(d, d);
  Vector weighted_beta = Vector::Zero(d);
  for (std::size_t b = 0; b < n; ++b) {
    if (!(sigma2s[b] > 0.0)) {
      throw SingularBlockFit(static_cast<int>(b),
                             "nonpositive error variance " +
                                 std::to_string(sigma2s[b]));
    }
    const Matrix m = grams[b] / sigma2s[b];  // inverse of the block's cov
    weight_sum += m;
    weighted_beta += m * betas[b];
  }
  Eigen::LDLT<Matrix> ldlt(weight_sum);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw NumericError("aggregated weight matrix is not positive definite");
  }
  AggregatedFit out;
  out.beta = ldlt.solve(weighted_beta);
  out.cov = ldlt.solve(Matrix::Identity(d, d));
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  out.per_block_fits = std::move(fits);
  return out;
}

AggregatedFit run_dnc_aggregate(std::span<const DataBlock> blocks,
                                const DncParams& params,
                                std::optional<double> sigma2, WeightMode mode) {
  check_blocks(blocks, params);
  for (const auto& b : blocks) {
    if (!b.has_responses()) {
      throw FormatError("block " + std::to_string(b.block_index) +
                        " has no responses to fit");
    }
  }
  if (mode == WeightMode::CommonVariance && !sigma2) {
    throw OtherError("common-variance weighting needs a known sigma2");
  }
  dnc_quota(params.k, blocks[0].p(), params.B);
  const std::int64_t k_b = dnc_block_k(params.k, params.B);
  for (const auto& b : blocks) {
    if (b.rows() < k_b) throw BlockTooSmall(b.block_index, b.rows(), k_b);
  }

  const std::size_t n_blocks = blocks.size();
  std::vector<Matrix> grams(n_blocks);
  std::vector<Vector> betas(n_blocks);
  std::vector<double> sigma2s(n_blocks);
  std::vector<OlsFit> fits(n_blocks);
  std::vector<std::string> failures(n_blocks);

  parallel_block_map(
      static_cast<std::int64_t>(n_blocks), params.max_threads,
      [&](std::int64_t ib) {
        const auto b = static_cast<std::size_t>(ib);
        try {
          const auto selection = iboss_select(blocks[b], k_b);
          std::vector<std::int64_t> local(selection.indices.size());
          for (std::size_t i = 0; i < local.size(); ++i) {
            local[i] = selection.indices[i] - blocks[b].row_offset;
          }
          auto [z, y] = extract_rows(blocks[b], local);
          const Matrix x = with_intercept(z);
          fits[b] = ols_fit(x, y, mode == WeightMode::CommonVariance
                                      ? sigma2
                                      : std::nullopt);
          grams[b] = x.transpose() * x;
          betas[b] = fits[b].beta;
          sigma2s[b] = fits[b].sigma2_hat;
        } catch (const Error& e) {
          failures[b] = e.what();
        }
      });

  for (std::size_t b = 0; b < n_blocks; ++b) {
    if (!failures[b].empty()) {
      throw SingularBlockFit(blocks[b].block_index, failures[b]);
    }
  }
  return aggregate_inverse_covariance(grams, betas, sigma2s, std::move(fits));
}

}  // namespace iboss
