#pragma once

#include "mfmh/samplers.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

namespace mfmh {

/// Streams chain rows `step,accepted,logpost,theta_1..theta_d` to a CSV file.
/// Rows are flushed periodically and on destruction, so a crashed run still
/// leaves a readable prefix.
class ChainCsvWriter {
 public:
  ChainCsvWriter(const std::filesystem::path& path, int dim, std::size_t flush_every = 1000);
  ~ChainCsvWriter();
  ChainCsvWriter(const ChainCsvWriter&) = delete;
  ChainCsvWriter& operator=(const ChainCsvWriter&) = delete;

  void write(std::size_t step, bool accepted, double log_post, const Vector& theta);
  void flush();
  std::size_t rows() const { return rows_; }

  /// Adapter usable as a StepObserver.
  StepObserver observer();

 private:
  std::FILE* file_ = nullptr;
  int dim_;
  std::size_t flush_every_;
  std::size_t rows_ = 0;
  std::string path_;
};

void write_chain_csv(const Chain& chain, const std::filesystem::path& path);

/// Reads a chain CSV back. Start state and counters are not part of the CSV
/// and are left empty.
Chain read_chain_csv(const std::filesystem::path& path);

}  // namespace mfmh
