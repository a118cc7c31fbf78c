// Copyright 2026 The Contag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "contag/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace contag {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t") == std::string::npos;
}

TagSchema parse_header(const std::string& line, const std::string& source) {
  std::istringstream in(line.substr(1));
  std::string field, zone;
  std::vector<std::string> types;
  bool have_zone = false, have_types = false;
  while (in >> field) {
    if (field.rfind("zone=", 0) == 0) {
      zone = field.substr(5);
      have_zone = true;
    } else if (field.rfind("types=", 0) == 0) {
      std::string list = field.substr(6);
      if (!list.empty()) types = split(list, ',');
      have_types = true;
    }
  }
  if (!have_zone || !have_types) {
    throw IoError(source + ":1: header must read '#zone=<name> types=<t1,t2,...>'");
  }
  try {
    return TagSchema(zone, types);
  } catch (const UsageError& e) {
    throw IoError(source + ":1: " + e.what());
  }
}

}  // namespace

Dataset parse_dataset(const std::string& text, const std::string& source) {
  auto lines = lines_of(text);
  std::size_t first = 0;
  while (first < lines.size() && is_blank(lines[first])) ++first;
  if (first == lines.size()) throw IoError(source + ": no sequences");
  if (lines[first].empty() || lines[first][0] != '#') {
    throw IoError(source + ":" + std::to_string(first + 1) + ": missing '#zone=... types=...' header");
  }
  Dataset data;
  data.schema = parse_header(lines[first], source);

  LabeledSequence current;
  current.zone = data.schema.zone();
  auto flush = [&] {
    if (!current.tokens.empty()) data.sequences.push_back(std::move(current));
    current = LabeledSequence{};
    current.zone = data.schema.zone();
  };
  for (std::size_t i = first + 1; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (is_blank(line)) {
      flush();
      continue;
    }
    auto cols = split(line, '\t');
    if (cols.size() != 3 || cols[0].empty() || cols[1].empty() || cols[2].empty()) {
      throw IoError(source + ":" + std::to_string(i + 1) +
                    ": expected 'surface<TAB>pos<TAB>tag', got '" + line + "'");
    }
    if (!data.schema.find(cols[2])) {
      throw IoError(source + ":" + std::to_string(i + 1) + ": unknown tag '" + cols[2] +
                    "' for zone '" + data.schema.zone() + "'");
    }
    current.tokens.push_back(cols[0]);
    current.pos.push_back(cols[1]);
    current.tags.push_back(cols[2]);
  }
  flush();
  if (data.sequences.empty()) throw IoError(source + ": no sequences");
  return data;
}

Dataset read_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path), path.string());
}

std::string format_dataset(const Dataset& data) {
  std::ostringstream out;
  out << "#zone=" << data.schema.zone() << " types=";
  for (std::size_t i = 0; i < data.schema.types().size(); ++i) {
    if (i) out << ',';
    out << data.schema.types()[i];
  }
  out << '\n';
  for (const auto& seq : data.sequences) {
    for (std::size_t t = 0; t < seq.size(); ++t) {
      out << seq.tokens[t] << '\t' << seq.pos[t] << '\t' << seq.tags[t] << '\n';
    }
    out << '\n';
  }
  return out.str();
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << format_dataset(data);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<LabeledSequence> read_unlabeled(const std::filesystem::path& path) {
  auto lines = lines_of(read_file(path));
  std::vector<LabeledSequence> out;
  LabeledSequence current;
  std::string zone;
  auto flush = [&] {
    if (!current.tokens.empty()) {
      current.zone = zone;
      out.push_back(std::move(current));
    }
    current = LabeledSequence{};
  };
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (is_blank(line)) {
      flush();
      continue;
    }
    if (line[0] == '#' && out.empty() && current.tokens.empty()) {
      zone = parse_header(line, path.string()).zone();
      continue;
    }
    auto cols = split(line, '\t');
    if (cols.size() < 2 || cols.size() > 3 || cols[0].empty() || cols[1].empty()) {
      throw IoError(path.string() + ":" + std::to_string(i + 1) +
                    ": expected 'surface<TAB>pos', got '" + line + "'");
    }
    current.tokens.push_back(cols[0]);
    current.pos.push_back(cols[1]);
  }
  flush();
  return out;
}

// ---------------------------------------------------------------------------
// Spans

std::vector<Span> spans_from_tags(std::span<const std::string> tags) {
  std::vector<Span> spans;
  bool open = false;
  Span cur;
  auto close = [&](std::size_t end) {
    if (open) {
      cur.end = end;
      spans.push_back(cur);
      open = false;
    }
  };
  for (std::size_t t = 0; t < tags.size(); ++t) {
    const std::string& tag = tags[t];
    if (tag == "O") {
      close(t);
      continue;
    }
    if (tag.size() < 3 || tag[1] != '-' || (tag[0] != 'B' && tag[0] != 'I')) {
      throw UsageError("malformed BIO tag '" + tag + "'");
    }
    const std::string type = tag.substr(2);
    const bool continues = tag[0] == 'I' && open && cur.type == type;
    if (continues) continue;
    close(t);
    cur = Span{t, t, type};
    open = true;
  }
  close(tags.size());
  return spans;
}

std::vector<Span> spans_from_tags(const TagSchema& schema, std::span<const int> tags) {
  std::vector<std::string> names;
  names.reserve(tags.size());
  for (int y : tags) names.push_back(schema.tag(y));
  return spans_from_tags(names);
}

std::vector<std::string> tags_from_spans(std::span<const Span> spans, std::size_t length) {
  std::vector<std::string> tags(length, "O");
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > length) {
      throw UsageError("span [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                       ") out of range for length " + std::to_string(length));
    }
    for (std::size_t t = s.start; t < s.end; ++t) {
      if (tags[t] != "O") throw UsageError("overlapping spans at token " + std::to_string(t));
      tags[t] = (t == s.start ? "B-" : "I-") + s.type;
    }
  }
  return tags;
}

// ---------------------------------------------------------------------------
// Scoring

double macro_average(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

TypeScore score_counts(std::string type, std::size_t tp, std::size_t fp, std::size_t fn) {
  TypeScore s;
  s.type = std::move(type);
  s.tp = tp;
  s.fp = fp;
  s.fn = fn;
  s.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  s.in_gold = tp + fn > 0;
  return s;
}

EvalReport entity_prf(std::span<const std::vector<Span>> gold, std::span<const std::vector<Span>> pred,
                      std::span<const std::string> types) {
  if (gold.size() != pred.size()) {
    throw UsageError("entity_prf: " + std::to_string(gold.size()) + " gold sequences vs " +
                     std::to_string(pred.size()) + " predicted");
  }
  std::vector<std::string> order(types.begin(), types.end());
  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
  };
  std::map<std::string, Counts> counts;
  auto ensure = [&](const std::string& type) {
    if (std::find(order.begin(), order.end(), type) == order.end()) order.push_back(type);
    return &counts[type];
  };
  for (const auto& t : order) counts[t];

  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::set<Span> g(gold[i].begin(), gold[i].end());
    std::set<Span> p(pred[i].begin(), pred[i].end());
    for (const auto& s : p) {
      Counts* c = ensure(s.type);
      if (g.count(s)) ++c->tp; else ++c->fp;
    }
    for (const auto& s : g) {
      if (!p.count(s)) ++ensure(s.type)->fn;
    }
  }

  EvalReport report;
  std::vector<double> ps, rs, fs;
  for (const auto& type : order) {
    const Counts& c = counts[type];
    report.per_type.push_back(score_counts(type, c.tp, c.fp, c.fn));
    const auto& row = report.per_type.back();
    if (row.in_gold) {
      ps.push_back(row.precision);
      rs.push_back(row.recall);
      fs.push_back(row.f1);
    }
  }
  report.macro_precision = macro_average(ps);
  report.macro_recall = macro_average(rs);
  report.macro_f1 = macro_average(fs);
  return report;
}

double round_for_display(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double x = std::round(value * scale * 1e6) / 1e6;
  const double whole = std::floor(x);
  return (x - whole > 0.5 ? whole + 1.0 : whole) / scale;
}

std::string format_report_table(const EvalReport& report) {
  std::size_t width = 9;
  for (const auto& t : report.per_type) width = std::max(width, t.type.size() + 1);
  std::string out;
  char buf[256];
  auto row = [&](const std::string& name, double p, double r, double f) {
    std::snprintf(buf, sizeof buf, "%-*s %6.1f %6.1f %6.1f\n", static_cast<int>(width), name.c_str(),
                  round_for_display(100.0 * p, 1), round_for_display(100.0 * r, 1), round_for_display(100.0 * f, 1));
    out += buf;
  };
  std::snprintf(buf, sizeof buf, "%-*s %6s %6s %6s\n", static_cast<int>(width), "type", "P", "R", "F1");
  out += buf;
  for (const auto& t : report.per_type) row(t.in_gold ? t.type : t.type + "*", t.precision, t.recall, t.f1);
  row("macro-avg", report.macro_precision, report.macro_recall, report.macro_f1);
  return out;
}

DatasetStats dataset_stats(const Dataset& data) {
  DatasetStats stats;
  for (const auto& t : data.schema.types()) stats.spans[t] = 0;
  for (const auto& seq : data.sequences) {
    ++stats.sequences;
    stats.tokens += seq.size();
    for (const auto& s : spans_from_tags(seq.tags)) ++stats.spans[s.type];
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Subword fragmentation

SubwordVocab read_subword_vocab(const std::filesystem::path& path) {
  SubwordVocab vocab;
  for (auto& line : lines_of(read_file(path))) {
    if (line.empty()) continue;
    vocab.pieces.insert(line);
  }
  if (vocab.pieces.empty()) throw IoError("'" + path.string() + "': empty subword vocabulary");
  return vocab;
}

namespace {

bool utf8_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

std::string lower_ascii(std::string s) {
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

}  // namespace

std::vector<std::string> wordpiece_tokenize(const std::string& input, const SubwordVocab& vocab) {
  const std::string word = vocab.lowercase ? lower_ascii(input) : input;
  std::vector<std::string> pieces;
  std::size_t start = 0;
  while (start < word.size()) {
    std::size_t end = word.size();
    std::string match;
    while (end > start) {
      std::string candidate = word.substr(start, end - start);
      if (start > 0) candidate = "##" + candidate;
      if (vocab.pieces.count(candidate)) {
        match = std::move(candidate);
        break;
      }
      // step back to the previous code point boundary
      do {
        --end;
      } while (end > start && utf8_continuation(static_cast<unsigned char>(word[end])));
    }
    if (match.empty()) return {vocab.unk};
    pieces.push_back(std::move(match));
    start = end;
  }
  return pieces;
}

double word_fragmentation_ratio(std::span<const std::string> words, const SubwordVocab& vocab,
                                const std::set<std::string>* restrict_to) {
  std::size_t counted = 0, pieces = 0;
  for (const auto& w : words) {
    if (w.empty()) continue;
    if (restrict_to && !restrict_to->count(w)) continue;
    ++counted;
    pieces += wordpiece_tokenize(w, vocab).size();
  }
  if (counted == 0) throw UsageError("word_fragmentation_ratio: no words to measure");
  return static_cast<double>(pieces) / static_cast<double>(counted);
}

}  // namespace contag
