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

#include "contag/synthetic.hpp"

#include <array>

#include "contag/artifact.hpp"

namespace contag {

namespace {

constexpr std::array kTitleHeads = {"Service", "Lease",    "Supply",    "Consulting", "License",
                                    "Purchase", "Employment", "Distribution", "Loan",   "Franchise"};
constexpr std::array kTitleMods = {"Master", "Framework", "Sub-Licence", "Amended"};
constexpr std::array kCompanies = {"Acme",    "Globex", "Initech",   "Umbrella", "Stark",  "Wayne",
                                   "Hooli",   "Vandelay", "Wonka",   "Soylent",  "Cyberdyne", "Tyrell",
                                   "Oscorp",  "Massive", "Dynamic", "Northwind"};
constexpr std::array kCompanyMids = {"Holdings", "Industries", "Systems", "Trading"};
constexpr std::array kSuffixes = {"Ltd", "Inc.", "LLC", "GmbH", "Corp.", "PLC"};
constexpr std::array kFiller = {"the",   "parties", "hereto", "agree",   "that",   "this",  "contract",
                                "shall", "be",      "deemed", "to",      "have",   "been",  "in",
                                "accordance", "with", "terms", "set", "out", "herein", "below",
                                "all",   "schedules", "annexed", "thereto", "which", "form", "part",
                                "hereof", "by",     "its",    "duly",   "authorised", "representatives"};
constexpr std::array kFillerPos = {"DT", "NNS", "RB", "VBP", "IN", "DT", "NN",  "MD",  "VB",  "VBN", "TO", "VB",
                                   "VBN", "IN", "NN",  "IN",  "NNS", "VBN", "RP", "RB", "RB",  "DT",  "NNS",
                                   "VBN", "RB", "WDT", "VBP", "NN", "RB",  "IN",  "PRP$", "RB", "VBN", "NNS"};
static_assert(kFiller.size() == kFillerPos.size());
constexpr std::array kMonths = {"January", "February", "March",     "April",   "May",      "June",
                                "July",    "August",   "September", "October", "November", "December"};

template <typename A>
const char* pick(const A& options, Rng& rng) {
  return options[rng.below(options.size())];
}

std::string ordinal(std::size_t day) {
  const char* suffix = "th";
  if (day % 100 < 11 || day % 100 > 13) {
    if (day % 10 == 1) suffix = "st";
    if (day % 10 == 2) suffix = "nd";
    if (day % 10 == 3) suffix = "rd";
  }
  return std::to_string(day) + suffix;
}

struct Builder {
  LabeledSequence seq;

  void push(const std::string& token, const std::string& pos, const std::string& tag) {
    seq.tokens.push_back(token);
    seq.pos.push_back(pos);
    seq.tags.push_back(tag);
  }
  void entity(const std::vector<std::pair<std::string, std::string>>& tokens, const std::string& type) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      push(tokens[i].first, tokens[i].second, (i == 0 ? "B-" : "I-") + type);
    }
  }
};

void add_party(Builder& b, Rng& rng) {
  std::vector<std::pair<std::string, std::string>> toks{{pick(kCompanies, rng), "NNP"}};
  if (rng.bernoulli(0.5)) toks.emplace_back(pick(kCompanyMids, rng), "NNP");
  toks.emplace_back(pick(kSuffixes, rng), "NNP");
  b.entity(toks, "Party");
}

}  // namespace

void SyntheticSpec::validate() const {
  if (train < 1 || dev < 1 || test < 1) throw UsageError("synthetic corpus counts must be at least 1");
  if (distance < 1) throw UsageError("trigger distance must be at least 1");
  if (start_trigger.empty() || effective_trigger.empty() || start_trigger == effective_trigger) {
    throw UsageError("trigger words must be non-empty and distinct");
  }
  for (const char* w : kFiller) {
    if (start_trigger == w || effective_trigger == w) throw UsageError("trigger word collides with filler vocabulary");
  }
}

TagSchema synthetic_schema(const std::string& zone) {
  return TagSchema(zone, {"Title", "Party", "StartDate", "EffectiveDate"});
}

LabeledSequence synthetic_sequence(const SyntheticSpec& spec, Rng& rng) {
  Builder b;
  b.seq.zone = spec.zone;
  b.push("This", "DT", "O");
  std::vector<std::pair<std::string, std::string>> title;
  if (rng.bernoulli(0.3)) title.emplace_back(pick(kTitleMods, rng), "NNP");
  title.emplace_back(pick(kTitleHeads, rng), "NNP");
  title.emplace_back("Agreement", "NNP");
  b.entity(title, "Title");
  b.push("is", "VBZ", "O");
  b.push("made", "VBN", "O");
  b.push("between", "IN", "O");
  add_party(b, rng);
  b.push("and", "CC", "O");
  add_party(b, rng);
  b.push(",", ",", "O");

  const bool start = rng.bernoulli(0.5);
  b.push(start ? spec.start_trigger : spec.effective_trigger, start ? "VBN" : "JJ", "O");
  for (std::size_t i = 1; i < spec.distance; ++i) {
    const std::size_t w = rng.below(kFiller.size());
    b.push(kFiller[w], kFillerPos[w], "O");
  }
  const std::size_t day = 1 + rng.below(28);
  const std::size_t year = 2000 + rng.below(26);
  b.entity({{pick(kMonths, rng), "NNP"}, {ordinal(day), "CD"}, {",", ","}, {std::to_string(year), "CD"}},
           start ? "StartDate" : "EffectiveDate");
  b.push(".", ".", "O");
  return std::move(b.seq);
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng root(spec.seed);
  const TagSchema schema = synthetic_schema(spec.zone);
  auto make = [&](std::size_t count) {
    Rng rng = root.split();
    Dataset d{schema, {}};
    d.sequences.reserve(count);
    for (std::size_t i = 0; i < count; ++i) d.sequences.push_back(synthetic_sequence(spec, rng));
    return d;
  };
  SyntheticCorpus corpus;
  corpus.train = make(spec.train);
  corpus.dev = make(spec.dev);
  corpus.test = make(spec.test);
  return corpus;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticCorpus& corpus) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  write_file_atomic(dir / "train.tsv", format_dataset(corpus.train));
  write_file_atomic(dir / "dev.tsv", format_dataset(corpus.dev));
  write_file_atomic(dir / "test.tsv", format_dataset(corpus.test));
}

}  // namespace contag
