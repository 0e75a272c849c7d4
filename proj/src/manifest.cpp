#include "solo/manifest.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "solo/errors.hpp"

namespace solo {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::Io, "cannot create file: " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) raise(ErrorKind::Io, "write failed: " + path);
}

namespace {

double parse_double_field(const std::string& s, const std::string& path, int line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    raise(ErrorKind::Format,
          path + ":" + std::to_string(line_no) + ": expected a number, got '" + s + "'");
  }
}

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path,
                                                    const std::string& expected_header,
                                                    std::size_t min_fields) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line))
    raise(ErrorKind::Format, path + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.substr(0, expected_header.size()) != expected_header)
    raise(ErrorKind::Format,
          path + ": expected header starting with '" + expected_header + "', got '" + line + "'");

  std::vector<std::vector<std::string>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() < min_fields)
      raise(ErrorKind::Format, path + ":" + std::to_string(line_no) +
                                   ": expected at least " + std::to_string(min_fields) +
                                   " fields, got " + std::to_string(fields.size()));
    fields.push_back(std::to_string(line_no));  // keep line number for messages
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

std::vector<PoolEntry> read_pool_manifest(const std::string& path) {
  auto rows = read_csv_rows(path, "path,class_label,duration_s", 3);
  std::vector<PoolEntry> entries;
  entries.reserve(rows.size());
  for (auto& f : rows) {
    int line_no = std::stoi(f.back());
    entries.push_back({f[0], f[1], parse_double_field(f[2], path, line_no)});
  }
  if (entries.empty()) raise(ErrorKind::Format, path + ": manifest has no rows");
  return entries;
}

std::vector<CorpusEntry> read_corpus_manifest(const std::string& path) {
  auto rows = read_csv_rows(path, "clip_id,path,duration_s", 3);
  std::vector<CorpusEntry> entries;
  entries.reserve(rows.size());
  for (auto& f : rows) {
    int line_no = std::stoi(f.back());
    CorpusEntry e{f[0], f[1], parse_double_field(f[2], path, line_no), ""};
    if (f.size() > 4) e.class_labels = f[3];
    entries.push_back(std::move(e));
  }
  if (entries.empty()) raise(ErrorKind::Format, path + ": manifest has no rows");
  return entries;
}

}  // namespace solo
