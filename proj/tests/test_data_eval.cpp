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

#include <cmath>
#include <filesystem>
#include <fstream>

#include "contag/data.hpp"
#include "doctest.h"

using namespace contag;

namespace {

std::vector<std::string> tags(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

SubwordVocab hand_vocab() {
  SubwordVocab v;
  v.pieces = {"un", "##able", "able", "the"};
  return v;
}

}  // namespace

TEST_CASE("dataset parsing") {
  const auto d = parse_dataset("#zone=header types=Title,Party\nThis\tDT\tO\nAgreement\tNN\tB-Title\n\n");
  REQUIRE(d.sequences.size() == 1);
  CHECK(d.sequences[0].size() == 2);
  CHECK(d.sequences[0].tags[1] == "B-Title");
  CHECK(d.schema.zone() == "header");
  CHECK(d.schema.types() == std::vector<std::string>{"Title", "Party"});

  try {
    parse_dataset("#zone=header types=Title,Party\nx\tNN\tB-Bogus\n");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("B-Bogus") != std::string::npos);
  }
  try {
    parse_dataset("");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("no sequences") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_dataset("#zone=h types=A\nonly-two\tcols\n"), IoError);
}

TEST_CASE("dataset text round trip") {
  const std::string text = "#zone=law types=GoverningLaw\nlaws\tNNS\tO\nof\tIN\tO\nEngland\tNNP\tB-GoverningLaw\n\n"
                           "Delaware\tNNP\tB-GoverningLaw\n";
  const auto d = parse_dataset(text);
  const auto again = parse_dataset(format_dataset(d));
  CHECK(format_dataset(again) == format_dataset(d));
  CHECK(again.sequences.size() == 2);
}

TEST_CASE("unlabeled input") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto empty = dir / "contag_test_empty.tsv";
  std::ofstream(empty).close();
  CHECK(read_unlabeled(empty).empty());
  const auto two = dir / "contag_test_two.tsv";
  std::ofstream(two) << "This\tDT\nAgreement\tNNP\n\nParty\tNNP\tB-Party\n";
  const auto seqs = read_unlabeled(two);
  REQUIRE(seqs.size() == 2);
  CHECK(seqs[0].tokens == std::vector<std::string>{"This", "Agreement"});
  CHECK(seqs[1].pos == std::vector<std::string>{"NNP"});
}

TEST_CASE("span extraction and repair") {
  using V = std::vector<Span>;
  CHECK(spans_from_tags(tags({"B-Party", "I-Party", "O"})) == V{{0, 2, "Party"}});
  CHECK(spans_from_tags(tags({"O", "I-Date"})) == V{{1, 2, "Date"}});
  CHECK(spans_from_tags(tags({"B-Party", "I-Date"})) == V{{0, 1, "Party"}, {1, 2, "Date"}});
  CHECK(spans_from_tags(tags({"B-A", "B-A", "I-A"})) == V{{0, 1, "A"}, {1, 3, "A"}});
  CHECK(spans_from_tags(tags({})).empty());
  const V spans{{1, 3, "Party"}, {4, 5, "Title"}};
  CHECK(spans_from_tags(tags_from_spans(spans, 6)) == spans);
}

TEST_CASE("entity scoring") {
  const std::vector<std::string> types{"Party", "Title"};
  const std::vector<std::vector<Span>> gold{{{0, 2, "Party"}, {5, 6, "Party"}}, {{0, 1, "Title"}}};
  SUBCASE("perfect predictions") {
    const auto r = entity_prf(gold, gold, types);
    for (const auto& t : r.per_type) {
      CHECK(t.precision == 1.0);
      CHECK(t.recall == 1.0);
      CHECK(t.f1 == 1.0);
    }
    CHECK(r.macro_f1 == 1.0);
  }
  SUBCASE("one correct and one spurious party") {
    const std::vector<std::vector<Span>> pred{{{0, 2, "Party"}, {3, 4, "Party"}}, {{0, 1, "Title"}}};
    const auto r = entity_prf(gold, pred, types);
    CHECK(r.per_type[0].precision == 0.5);
    CHECK(r.per_type[0].recall == 0.5);
    CHECK(r.per_type[0].f1 == 0.5);
    CHECK(r.macro_f1 == doctest::Approx(0.75));
    CHECK(r.macro_precision == doctest::Approx((0.5 + 1.0) / 2));
  }
  SUBCASE("types absent from gold stay out of the macro") {
    const std::vector<std::vector<Span>> g{{{0, 1, "Title"}}};
    const std::vector<std::vector<Span>> p{{{0, 1, "Title"}, {2, 3, "Party"}}};
    const auto r = entity_prf(g, p, types);
    CHECK_FALSE(r.per_type[0].in_gold);
    CHECK(r.macro_f1 == 1.0);
  }
  SUBCASE("no predictions gives zeros, not NaN") {
    const std::vector<std::vector<Span>> none{{}, {}};
    const auto r = entity_prf(gold, none, types);
    CHECK(r.macro_precision == 0.0);
    CHECK(r.macro_f1 == 0.0);
  }
}

TEST_CASE("macro average of published rows") {
  const std::vector<double> header{96.2, 92.0, 97.1, 95.7};
  CHECK(std::abs(macro_average(header) - 95.25) < 1e-9);
  CHECK(round_for_display(macro_average(header), 1) == 95.2);
  const std::vector<double> law{75.9, 97.2};
  CHECK(std::abs(macro_average(law) - 86.55) < 1e-9);
  CHECK(round_for_display(macro_average(law), 1) == 86.5);
  CHECK(round_for_display(86.56, 1) == 86.6);
  CHECK(round_for_display(0.0, 1) == 0.0);
  CHECK(macro_average(std::vector<double>{}) == 0.0);
}

TEST_CASE("report table rows average into the macro row") {
  EvalReport r;
  r.per_type = {score_counts("Title", 9, 1, 1), score_counts("Party", 1, 1, 3)};
  for (auto& t : r.per_type) t.in_gold = true;
  const std::vector<double> f{r.per_type[0].f1, r.per_type[1].f1};
  r.macro_f1 = macro_average(f);
  r.macro_precision = (0.9 + 0.5) / 2;
  r.macro_recall = (0.9 + 0.25) / 2;
  const std::string table = format_report_table(r);
  CHECK(table.find("macro-avg") != std::string::npos);
  CHECK(table.find("Title") != std::string::npos);
  CHECK(table.find("57.5") != std::string::npos);  // recall macro
}

TEST_CASE("dataset statistics") {
  Dataset d{TagSchema("header", {"Title", "Party"}), {}};
  LabeledSequence s;
  s.tokens = {"Acme", "Ltd", "and"};
  s.pos = {"NNP", "NNP", "CC"};
  s.tags = {"B-Party", "I-Party", "O"};
  d.sequences.push_back(s);
  auto st = dataset_stats(d);
  CHECK(st.sequences == 1);
  CHECK(st.tokens == 3);
  CHECK(st.spans["Party"] == 1);
  CHECK(st.spans["Title"] == 0);
  d.sequences[0].tags = {"O", "O", "O"};
  st = dataset_stats(d);
  CHECK(st.spans["Party"] == 0);
}

TEST_CASE("wordpiece tokenization") {
  const auto v = hand_vocab();
  CHECK(wordpiece_tokenize("the", v) == std::vector<std::string>{"the"});
  CHECK(wordpiece_tokenize("unable", v) == std::vector<std::string>{"un", "##able"});
  CHECK(wordpiece_tokenize("xyz", v) == std::vector<std::string>{"[UNK]"});
  SubwordVocab lower = v;
  lower.lowercase = true;
  CHECK(wordpiece_tokenize("The", lower) == std::vector<std::string>{"the"});
  CHECK(wordpiece_tokenize("The", v) == std::vector<std::string>{"[UNK]"});
}

TEST_CASE("word fragmentation ratio") {
  const auto v = hand_vocab();
  const std::vector<std::string> words{"unable", "the"};
  CHECK(std::abs(word_fragmentation_ratio(words, v) - 1.5) < 1e-12);
  const std::vector<std::string> whole{"the", "able", "un"};
  CHECK(word_fragmentation_ratio(whole, v) == 1.0);
  const std::set<std::string> only{"unable"};
  CHECK(word_fragmentation_ratio(words, v, &only) == 2.0);
  CHECK_THROWS_AS(word_fragmentation_ratio(std::vector<std::string>{}, v), UsageError);
}
