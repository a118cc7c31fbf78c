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
#include <set>

#include "contag/synthetic.hpp"
#include "contag/training.hpp"
#include "doctest.h"

using namespace contag;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.encoder.units = 8;
  c.features.word_dim = 12;
  c.features.pos_dim = 4;
  c.features.shape_dim = 4;
  c.dropout = 0.1;
  c.max_epochs = 3;
  c.batch_size = 8;
  c.learning_rate = 0.01;
  return c;
}

SyntheticCorpus small_corpus(std::size_t train = 150) {
  SyntheticSpec spec;
  spec.seed = 77;
  spec.train = train;
  spec.dev = 40;
  spec.test = 40;
  return generate_synthetic(spec);
}

}  // namespace

TEST_CASE("adam first step moves by the learning rate") {
  ad::ParameterSet p;
  p.add("w", Tensor::scalar(0.5));
  AdamState st;
  adam_step(p, {{"w", Tensor::scalar(1.0)}}, st, 1e-3);
  CHECK(std::abs((0.5 - p.at("w").item()) - 1e-3) < 1e-6);
  CHECK(st.step == 1);

  ad::ParameterSet q;
  q.add("w", Tensor::row({0.25, -4}));
  AdamState st2;
  adam_step(q, {{"w", Tensor::row({0, 0})}}, st2, 1e-3);
  CHECK(q.at("w") == Tensor::row({0.25, -4}));

  ad::ParameterSet a, b;
  a.add("w", Tensor::row({1, 2, 3}));
  b.add("w", Tensor::row({1, 2, 3}));
  AdamState sa, sb;
  for (int i = 0; i < 5; ++i) {
    const Tensor g = Tensor::row({0.1 * i, -0.3, 2.0 / (i + 1)});
    adam_step(a, {{"w", g}}, sa, 1e-2);
    adam_step(b, {{"w", g}}, sb, 1e-2);
  }
  CHECK(a == b);
  CHECK_THROWS_AS(adam_step(a, {{"w", Tensor::row({1})}}, sa, 1e-2), ShapeError);
}

TEST_CASE("global norm clipping") {
  std::map<std::string, Tensor> g{{"a", Tensor::row({3, 0})}, {"b", Tensor::row({4})}};
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g.at("a")[0] == doctest::Approx(0.6));
  CHECK(g.at("b")[0] == doctest::Approx(0.8));
  std::map<std::string, Tensor> small{{"a", Tensor::row({0.1})}};
  clip_global_norm(small, 5.0);
  CHECK(small.at("a")[0] == 0.1);
}

TEST_CASE("monte-carlo splits") {
  const auto splits = monte_carlo_splits(100, 5, 0.2, 3);
  REQUIRE(splits.size() == 5);
  std::set<std::vector<std::size_t>> devs;
  for (const auto& s : splits) {
    CHECK(s.train.size() == 80);
    CHECK(s.dev.size() == 20);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.dev.begin(), s.dev.end());
    CHECK(all.size() == 100);
    auto d = s.dev;
    std::sort(d.begin(), d.end());
    devs.insert(d);
  }
  CHECK(devs.size() == 5);
  const auto again = monte_carlo_splits(100, 5, 0.2, 3);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(again[i].train == splits[i].train);
    CHECK(again[i].dev == splits[i].dev);
  }
  const auto two = monte_carlo_splits(2, 1, 0.5, 1);
  CHECK(two[0].train.size() == 1);
  CHECK(two[0].dev.size() == 1);
  CHECK_THROWS_AS(monte_carlo_splits(1, 1, 0.5, 1), UsageError);
}

TEST_CASE("training on a separable corpus") {
  const auto corpus = small_corpus(300);
  TrainConfig c = small_config();
  c.max_epochs = 6;
  c.patience = 6;
  const auto r = train(c, corpus.train, corpus.dev);
  REQUIRE(r.history.size() >= 3);
  CHECK(r.history[1].train_loss < r.history[0].train_loss);
  CHECK(r.history[2].train_loss < r.history[1].train_loss);
  CHECK(r.best_dev_f1 >= 0.99);
  CHECK(evaluate(r.model, corpus.test.sequences).macro_f1 >= 0.99);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& seq = corpus.train.sequences[i];
    CHECK(spans_from_tags(r.model.predict(seq)) == spans_from_tags(seq.tags));
  }
  // PAD rows never move.
  for (const auto& name : embedding_param_names(c.features)) {
    for (double v : r.model.params().at(name).row_span(Vocabulary::kPad)) CHECK(v == 0.0);
  }
}

TEST_CASE("training boundaries and determinism") {
  const auto corpus = small_corpus(60);
  TrainConfig c = small_config();
  c.max_epochs = 0;
  const auto none = train(c, corpus.train, corpus.dev);
  CHECK(none.history.empty());
  CHECK(none.best_epoch == 0);

  c.max_epochs = 2;
  c.word_dropout = 0.05;
  const auto a = train(c, corpus.train, corpus.dev);
  const auto b = train(c, corpus.train, corpus.dev);
  CHECK(a.history == b.history);
  CHECK(a.model.params() == b.model.params());
  c.seed = 2;
  const auto d = train(c, corpus.train, corpus.dev);
  CHECK_FALSE(d.model.params() == a.model.params());

  c.use_crf = false;
  const auto soft = train(c, corpus.train, corpus.dev);
  CHECK_FALSE(soft.model.params().contains("crf.trans"));

  Dataset other = corpus.dev;
  other.schema = TagSchema("law", {"GoverningLaw"});
  CHECK_THROWS_AS(train(c, corpus.train, other), UsageError);
}

TEST_CASE("frozen word embeddings stay fixed") {
  const auto corpus = small_corpus(40);
  TrainConfig c = small_config();
  c.max_epochs = 1;
  c.features.freeze_words = true;
  const auto r = train(c, corpus.train, corpus.dev);
  const auto init = train([&] {
    TrainConfig z = c;
    z.max_epochs = 0;
    return z;
  }(), corpus.train, corpus.dev);
  CHECK(r.model.params().at("emb.word") == init.model.params().at("emb.word"));
  CHECK_FALSE(r.model.params().at("emb.pos") == init.model.params().at("emb.pos"));
}

TEST_CASE("random search") {
  SearchSpace space;
  SUBCASE("samples lie in the declared sets") {
    Rng rng(1);
    auto in = [](const auto& v, auto x) { return std::find(v.begin(), v.end(), x) != v.end(); };
    for (int i = 0; i < 1000; ++i) {
      const auto p = sample_point(space, rng);
      CHECK(in(space.units, p.units));
      CHECK(in(space.layers, p.layers));
      CHECK(in(space.batch_sizes, p.batch_size));
      CHECK(in(space.dropout, p.dropout));
      CHECK(in(space.word_dropout, p.word_dropout));
    }
  }
  SUBCASE("budget one returns its only trial") {
    const auto r = random_search(space, 1, 5, [](const SearchPoint&, std::size_t) { return 0.3; });
    REQUIRE(r.trials.size() == 1);
    CHECK(r.best == r.trials[0].point);
    CHECK(r.best_score == 0.3);
  }
  SUBCASE("argmax of an indicator objective") {
    auto indicator = [](const SearchPoint& p, std::size_t) { return p.units == 200 ? 1.0 : 0.0; };
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto r = random_search(space, 6, seed, indicator);
      bool any = false;
      for (const auto& t : r.trials) any |= t.point.units == 200;
      if (any) CHECK(r.best.units == 200);
    }
  }
  SUBCASE("worker count does not change the result") {
    auto f = [](const SearchPoint& p, std::size_t) { return std::sin(static_cast<double>(p.units * p.layers)) + p.dropout; };
    const auto one = random_search(space, 12, 9, f, 1);
    const auto four = random_search(space, 12, 9, f, 4);
    CHECK(one.best == four.best);
    CHECK(one.best_trial == four.best_trial);
    for (std::size_t i = 0; i < 12; ++i) CHECK(one.trials[i].score == four.trials[i].score);
  }
  CHECK_THROWS_AS(random_search(space, 0, 1, [](const SearchPoint&, std::size_t) { return 0.0; }), UsageError);
}
