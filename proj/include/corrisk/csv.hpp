#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace corrisk::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
  int require_column(const std::string& name, const std::string& file) const;
};

// Reads a comma-separated file with a mandatory header row. No quoting:
// none of the pipeline's schemas embed commas.
Table read_file(const std::string& path);

class Writer {
 public:
  explicit Writer(const std::string& path);
  void row(const std::vector<std::string>& fields);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace corrisk::csv
