#include "tadispatch/profile_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "tadispatch/errors.hpp"

namespace tad {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

void expect_header(const std::string& got, const std::string& want) {
  std::string trimmed = got;
  while (!trimmed.empty() && (trimmed.back() == '\r' || trimmed.back() == '\n')) trimmed.pop_back();
  if (trimmed != want)
    throw ValidationError("expected CSV header '" + want + "', got '" + trimmed + "'");
}

}  // namespace

LinkProfile load_profile_csv(std::istream& in, int device_count, const Topology* topo,
                             double self_beta_floor) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("profile CSV is empty");
  expect_header(line, "src,dst,alpha_us,beta_us_per_mb");

  const double nan = std::numeric_limits<double>::quiet_NaN();
  Matrix alpha(device_count, device_count, nan);
  Matrix beta(device_count, device_count, nan);

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4)
      throw ValidationError("profile CSV line " + std::to_string(line_no) + ": expected 4 fields");
    try {
      const int src = std::stoi(fields[0]);
      const int dst = std::stoi(fields[1]);
      if (src < 0 || src >= device_count || dst < 0 || dst >= device_count)
        throw ValidationError("profile CSV line " + std::to_string(line_no) +
                              ": device index out of range");
      alpha.at(src, dst) = std::stod(fields[2]);
      beta.at(src, dst) = std::stod(fields[3]);
    } catch (const std::invalid_argument&) {
      throw ValidationError("profile CSV line " + std::to_string(line_no) + ": bad number");
    }
  }
  return fill_partial_profile(alpha, beta, topo, self_beta_floor);
}

LinkProfile load_profile_file(const std::string& path, int device_count, const Topology* topo,
                              double self_beta_floor) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open profile file: " + path);
  return load_profile_csv(in, device_count, topo, self_beta_floor);
}

void save_profile_csv(std::ostream& out, const Matrix& alpha, const Matrix& beta) {
  out << "src,dst,alpha_us,beta_us_per_mb\n";
  char buf[128];
  for (int i = 0; i < alpha.rows(); ++i)
    for (int j = 0; j < alpha.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%.12g,%.12g\n", i, j, alpha.at(i, j), beta.at(i, j));
      out << buf;
    }
}

void save_profile_file(const std::string& path, const Matrix& alpha, const Matrix& beta) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write profile file: " + path);
  save_profile_csv(out, alpha, beta);
}

std::vector<TransferSample> load_samples_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("samples CSV is empty");
  expect_header(line, "src,dst,message_mb,time_us");

  std::vector<TransferSample> samples;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4)
      throw ValidationError("samples CSV line " + std::to_string(line_no) + ": expected 4 fields");
    try {
      samples.push_back({std::stoi(fields[0]), std::stoi(fields[1]), std::stod(fields[2]),
                         std::stod(fields[3])});
    } catch (const std::invalid_argument&) {
      throw ValidationError("samples CSV line " + std::to_string(line_no) + ": bad number");
    }
  }
  return samples;
}

std::vector<TransferSample> load_samples_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open samples file: " + path);
  return load_samples_csv(in);
}

}  // namespace tad
