#pragma once

#include <string>
#include <vector>

namespace solo {

// Row of an input pool manifest: CSV `path,class_label,duration_s`.
struct PoolEntry {
  std::string path;
  std::string class_label;
  double duration_s = 0.0;
};

// Row of a corpus manifest: CSV `clip_id,path,duration_s[,class_labels]`.
struct CorpusEntry {
  std::string clip_id;
  std::string path;
  double duration_s = 0.0;
  std::string class_labels;  // optional, empty when absent
};

std::vector<PoolEntry> read_pool_manifest(const std::string& path);
std::vector<CorpusEntry> read_corpus_manifest(const std::string& path);

// Splits one CSV line; supports double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(const std::string& line);

// Reads a whole text file; raises Io on failure.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& contents);

}  // namespace solo
