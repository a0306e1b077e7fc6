#include "mfmh/chain_io.hpp"

#include "mfmh/errors.hpp"
#include "mfmh/map_io.hpp"

#include <fstream>
#include <sstream>

namespace mfmh {

ChainCsvWriter::ChainCsvWriter(const std::filesystem::path& path, int dim, std::size_t flush_every)
    : dim_(dim), flush_every_(flush_every == 0 ? 1 : flush_every), path_(path.string()) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  file_ = std::fopen(path_.c_str(), "wb");
  if (!file_) throw IoError("cannot write " + path_);
  std::fputs("step,accepted,logpost", file_);
  for (int k = 1; k <= dim; ++k) std::fprintf(file_, ",theta_%d", k);
  std::fputc('\n', file_);
}

ChainCsvWriter::~ChainCsvWriter() {
  if (file_) std::fclose(file_);
}

void ChainCsvWriter::write(std::size_t step, bool accepted, double log_post, const Vector& theta) {
  if (theta.size() != dim_) throw DimensionError("chain row has the wrong dimension");
  std::string line = std::to_string(step) + (accepted ? ",1," : ",0,") + format_real(log_post);
  for (Eigen::Index k = 0; k < theta.size(); ++k) line += "," + format_real(theta[k]);
  line += '\n';
  if (std::fputs(line.c_str(), file_) < 0) throw IoError("write failed for " + path_);
  if (++rows_ % flush_every_ == 0) flush();
}

void ChainCsvWriter::flush() {
  if (std::fflush(file_) != 0) throw IoError("flush failed for " + path_);
}

StepObserver ChainCsvWriter::observer() {
  return [this](std::size_t step, bool accepted, double lp, const Vector& theta) {
    write(step, accepted, lp, theta);
  };
}

void write_chain_csv(const Chain& chain, const std::filesystem::path& path) {
  ChainCsvWriter out(path, chain.dim());
  for (Eigen::Index k = 0; k < chain.size(); ++k)
    out.write(static_cast<std::size_t>(k + 1), chain.accepted[static_cast<std::size_t>(k)] != 0,
              chain.log_posts[k], chain.samples.col(k));
}

Chain read_chain_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty chain file " + path.string());
  int dim = 0;
  {
    std::stringstream header(line);
    std::string cell;
    int col = 0;
    while (std::getline(header, cell, ',')) {
      if (col >= 3) ++dim;
      ++col;
    }
  }
  if (dim == 0) throw IoError("chain file has no theta columns: " + path.string());
  std::vector<double> values;
  std::vector<double> lps;
  std::vector<std::uint8_t> acc;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != static_cast<std::size_t>(dim + 3))
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": wrong number of columns");
    try {
      acc.push_back(cells[1] == "1" ? 1 : 0);
      lps.push_back(std::stod(cells[2]));
      for (int k = 0; k < dim; ++k) values.push_back(std::stod(cells[static_cast<std::size_t>(3 + k)]));
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  Chain chain;
  const auto m = static_cast<Eigen::Index>(acc.size());
  chain.samples = Eigen::Map<const Matrix>(values.data(), dim, m);
  chain.log_posts = Eigen::Map<const Vector>(lps.data(), m);
  chain.log_alpha = Vector::Constant(m, std::numeric_limits<double>::quiet_NaN());
  chain.accepted = std::move(acc);
  return chain;
}

}  // namespace mfmh
