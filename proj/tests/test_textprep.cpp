#include <cmath>
#include <string>
#include <vector>

#include "crvae/textprep.hpp"
#include "crvae/verbalize.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace crvae;

TEST_CASE("tokenize_en lowercases and splits on ASCII punctuation") {
  CHECK(tokenize_en("COVID-19, rising!") == std::vector<std::string>{"covid", "19", "rising"});
  CHECK(tokenize_en("") == std::vector<std::string>{});
  CHECK(tokenize_en("...!?") == std::vector<std::string>{});
  CHECK(tokenize_en("Hello  world") == std::vector<std::string>{"hello", "world"});
  // non-ASCII bytes are token material, not separators
  CHECK(tokenize_en("caf\xc3\xa9 bar") == std::vector<std::string>{"caf\xc3\xa9", "bar"});
}

TEST_CASE("utf8_chars splits by codepoint") {
  auto chars = utf8_chars("a\xc3\xa9\xe4\xb8\xad");
  REQUIRE(chars.size() == 3);
  CHECK(chars[0] == "a");
  CHECK(chars[1] == "\xc3\xa9");
  CHECK(chars[2] == "\xe4\xb8\xad");
}

TEST_CASE("segmenter registry") {
  auto ws = get_segmenter("whitespace");
  CHECK(ws("one two") == std::vector<std::string>{"one", "two"});
  CHECK_THROWS_AS(get_segmenter("no-such-segmenter"), ConfigError);

  register_segmenter("test_chars", [](const std::string& s) { return utf8_chars(s); });
  auto seg = get_segmenter("test_chars");
  CHECK(seg("ab").size() == 2);
}

TEST_CASE("segment_zh drops punctuation-only tokens") {
  auto seg = get_segmenter("whitespace");
  auto toks = segment_zh("\xe4\xb8\xad \xe3\x80\x82 abc ,", seg);
  CHECK(toks == std::vector<std::string>{"\xe4\xb8\xad", "abc"});
}

TEST_CASE("load_embedding_table basics") {
  testutil::TempDir tmp("emb");
  testutil::spit(tmp.str("t.txt"), "cat 1 2 3\ndog 4 5 6\n");
  auto table = load_embedding_table(tmp.str("t.txt"), 3, "en");
  CHECK(table.size() == 2);
  CHECK(table.dim() == 3);
  CHECK(table.language() == "en");
  CHECK(table.find("cat") == 0);
  CHECK(table.find("emu") == -1);
  Vecd v = table.vector_of(table.find("dog"));
  CHECK(v(0) == 4.0);
  CHECK(v(2) == 6.0);
}

TEST_CASE("load_embedding_table keeps first duplicate and reports bad lines") {
  testutil::TempDir tmp("emb");
  testutil::spit(tmp.str("dup.txt"), "a 1 2\na 9 9\n");
  auto table = load_embedding_table(tmp.str("dup.txt"), 2);
  CHECK(table.size() == 1);
  CHECK(table.vector_of(0)(0) == 1.0);

  testutil::spit(tmp.str("bad.txt"), "a 1 2 3\nb 1 2\n");
  try {
    load_embedding_table(tmp.str("bad.txt"), 3);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);  // offending line number
  }
}

TEST_CASE("embed_tokens direct hit is bit-identical and pads with zero rows") {
  testutil::TempDir tmp("emb");
  testutil::spit(tmp.str("t.txt"), "cat 0.25 -1.5 3\n");
  auto table = load_embedding_table(tmp.str("t.txt"), 3);
  auto emb = embed_tokens({"cat"}, table, 4);
  REQUIRE(emb.vectors.rows() == 4);
  REQUIRE(emb.vectors.cols() == 3);
  CHECK(emb.vectors(0, 0) == 0.25);
  CHECK(emb.vectors(0, 1) == -1.5);
  CHECK(emb.vectors(0, 2) == 3.0);
  CHECK(emb.mask == std::vector<char>{1, 0, 0, 0});
  CHECK(emb.vectors.row(1).norm() == 0.0);
  CHECK(emb.tokens == std::vector<std::string>{"cat"});
}

TEST_CASE("embed_tokens splits unknown compounds into known characters") {
  testutil::TempDir tmp("emb");
  // table holds two CJK characters but not their compound
  testutil::spit(tmp.str("t.txt"),
                 "\xe4\xb8\xad 1 0\n\xe5\x9b\xbd 0 1\n");
  auto table = load_embedding_table(tmp.str("t.txt"), 2);
  auto emb = embed_tokens({"\xe4\xb8\xad\xe5\x9b\xbd"}, table, 4);
  CHECK(emb.tokens == std::vector<std::string>{"\xe4\xb8\xad", "\xe5\x9b\xbd"});
  CHECK(emb.vectors(0, 0) == 1.0);
  CHECK(emb.vectors(1, 1) == 1.0);
  CHECK(emb.mask == std::vector<char>{1, 1, 0, 0});
}

TEST_CASE("embed_tokens falls back to a single zero row when characters miss") {
  testutil::TempDir tmp("emb");
  testutil::spit(tmp.str("t.txt"), "a 1 1\n");
  auto table = load_embedding_table(tmp.str("t.txt"), 2);
  auto emb = embed_tokens({"xy"}, table, 3);  // x,y both unknown
  CHECK(emb.tokens == std::vector<std::string>{"xy"});
  CHECK(emb.vectors.row(0).norm() == 0.0);
  CHECK(emb.mask == std::vector<char>{1, 0, 0});
}

TEST_CASE("embed_tokens chain: first table containing the token wins") {
  testutil::TempDir tmp("emb");
  testutil::spit(tmp.str("zh.txt"), "deal 7 7\n");
  testutil::spit(tmp.str("en.txt"), "deal 1 2\nonly 3 4\n");
  auto zh = load_embedding_table(tmp.str("zh.txt"), 2, "zh");
  auto en = load_embedding_table(tmp.str("en.txt"), 2, "en");
  auto emb = embed_tokens({"deal", "only"}, {&zh, &en}, 2);
  CHECK(emb.vectors(0, 0) == 7.0);  // zh shadows en
  CHECK(emb.vectors(1, 0) == 3.0);  // fell through to en
}

TEST_CASE("embed_tokens truncates at max_len keeping the head") {
  testutil::TempDir tmp("emb");
  testutil::spit(tmp.str("t.txt"), "a 1\nb 2\nc 3\n");
  auto table = load_embedding_table(tmp.str("t.txt"), 1);
  auto emb = embed_tokens({"a", "b", "c"}, table, 2);
  REQUIRE(emb.vectors.rows() == 2);
  CHECK(emb.vectors(0, 0) == 1.0);
  CHECK(emb.vectors(1, 0) == 2.0);
  CHECK(emb.mask == std::vector<char>{1, 1});
}

TEST_CASE("nearest_word exhaustive scan with insertion-order ties") {
  testutil::TempDir tmp("emb");
  testutil::spit(tmp.str("t.txt"), "a 0 0\nb 1 0\nc 1 0\n");
  auto table = load_embedding_table(tmp.str("t.txt"), 2);

  Vecd q(2);
  q << 1, 0;
  auto [tok, dist] = nearest_word(q, table);
  CHECK(tok == "b");  // c ties, b was inserted first
  CHECK(dist == doctest::Approx(0.0));

  q << 0.9, 0;
  CHECK(nearest_word(q, table).first == "b");
  q << 0.1, 0;
  CHECK(nearest_word(q, table).first == "a");
}

TEST_CASE("nearest_word recovers every uniquely stored token") {
  testutil::TempDir tmp("emb");
  testutil::spit(tmp.str("t.txt"), "u 1 0 0\nv 0 1 0\nw 0 0 1\n");
  auto table = load_embedding_table(tmp.str("t.txt"), 3);
  for (int i = 0; i < table.size(); ++i) {
    auto [tok, dist] = nearest_word(table.vector_of(i), table);
    CHECK(tok == table.tokens()[i]);
    CHECK(dist == 0.0);
  }
}

TEST_CASE("verbalize_sequence drops masked-off rows") {
  testutil::TempDir tmp("emb");
  testutil::spit(tmp.str("t.txt"), "x 1 0\ny 0 1\n");
  auto table = load_embedding_table(tmp.str("t.txt"), 2);

  Matd recon(3, 2);
  recon << 0.9, 0.1, 0.2, 1.1, 5, 5;
  auto out = verbalize_sequence(recon, {1, 1, 0}, table);
  CHECK(out.tokens == std::vector<std::string>{"x", "y"});
  REQUIRE(out.distances.size() == 2);
  CHECK(out.distances[0] == doctest::Approx(std::sqrt(0.02)));  // (0.9,0.1) vs x=(1,0)

  auto empty = verbalize_sequence(recon, {0, 0, 0}, table);
  CHECK(empty.tokens.empty());
}

TEST_CASE("verbalize cosine metric flag") {
  testutil::TempDir tmp("emb");
  // cosine picks direction over magnitude
  testutil::spit(tmp.str("t.txt"), "near 10 0\nfar 0 1\n");
  auto table = load_embedding_table(tmp.str("t.txt"), 2);
  Vecd q(2);
  q << 0.3, 0;  // euclidean-nearest is "far" (dist ~1.04 vs 9.7); cosine-nearest is "near"
  CHECK(nearest_word(q, table, VerbalizeMetric::Euclidean).first == "far");
  CHECK(nearest_word(q, table, VerbalizeMetric::Cosine).first == "near");
}
