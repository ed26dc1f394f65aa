#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "kprompt/errors.hpp"
#include "kprompt/kb.hpp"
#include "kprompt/linker.hpp"
#include "kprompt/prompt.hpp"
#include "kprompt/rng.hpp"

using namespace kprompt;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
    auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path, std::ios::trunc);
    out << body;
    return path;
}

struct ChainKb {
    KnowledgeGraph kg;
    EntityId t, mid, tail_b, tail_d;
    RelationId located, part, member;
};

ChainKb chain_kb() {
    ChainKb c;
    c.t = c.kg.add_entity("Talvorn");
    c.mid = c.kg.add_entity("Carvane");
    c.tail_b = c.kg.add_entity("Borenia");
    c.tail_d = c.kg.add_entity("Delvane");
    c.located = c.kg.add_relation("located_in");
    c.part = c.kg.add_relation("part_of");
    c.member = c.kg.add_relation("member_of");
    return c;
}

// Every span must carry exactly the surface words of its entity.
void check_span_integrity(const KnowledgePrompt& p, const KnowledgeGraph& kg) {
    for (const EntitySpan& sp : p.entity_spans) {
        auto words = tokenize(kg.entity_name(sp.entity));
        REQUIRE(sp.end - sp.start == static_cast<int>(words.size()));
        for (std::size_t i = 0; i < words.size(); ++i)
            CHECK(p.tokens[static_cast<std::size_t>(sp.start) + i] == words[i]);
    }
}

}  // namespace

TEST_CASE("special token helpers") {
    CHECK(tokens::pseudo(1) == "[P1]");
    CHECK(tokens::pseudo(6) == "[P6]");
    CHECK_THROWS_AS(tokens::pseudo(0), ConfigError);
    CHECK_THROWS_AS(tokens::pseudo(7), ConfigError);
    CHECK(tokens::is_pseudo("[P3]"));
    CHECK_FALSE(tokens::is_pseudo("[P7]"));
    CHECK_FALSE(tokens::is_pseudo("[P0]"));
    CHECK_FALSE(tokens::is_pseudo("p3"));
    CHECK(tokens::is_special(tokens::kTrigOpen));
    CHECK(tokens::is_special(tokens::kMask));
    CHECK(tokens::is_special("[P2]"));
    CHECK_FALSE(tokens::is_special("vaccine"));
}

TEST_CASE("1h1c renders entity, pseudo tokens, relation, entity") {
    KnowledgeGraph kg;
    EntityId nyc = kg.add_entity("New York City");
    EntityId us = kg.add_entity("United States");
    RelationId loc = kg.add_relation("located_in");
    SubStructure sub{SubStructureKind::OneHopOneChain, {RelationPath{nyc, {{loc, us}}}}};

    auto p = render(sub, kg);
    std::vector<std::string> want{"[K]", "new", "york", "city", "[P1]", "located",
                                  "in",  "[P2]", "united", "states", "[/K]"};
    CHECK(p.tokens == want);
    REQUIRE(p.entity_spans.size() == 2);
    CHECK(p.entity_spans[0] == EntitySpan{1, 4, nyc});
    CHECK(p.entity_spans[1] == EntitySpan{8, 10, us});
    CHECK(p.label == PromptLabel::Unlabeled);
    CHECK_FALSE(p.masked_entity.has_value());
    check_span_integrity(p, kg);

    auto bare = render(sub, kg, false);
    std::vector<std::string> want_bare{"[K]", "new", "york", "city", "located",
                                       "in",  "united", "states", "[/K]"};
    CHECK(bare.tokens == want_bare);
    CHECK(bare.entity_spans[1] == EntitySpan{6, 8, us});
}

TEST_CASE("2h1c renders the full chain") {
    auto c = chain_kb();
    SubStructure sub{SubStructureKind::TwoHopOneChain,
                     {RelationPath{c.t, {{c.located, c.mid}, {c.part, c.tail_b}}}}};
    auto p = render(sub, c.kg);
    std::vector<std::string> want{"[K]", "talvorn", "[P1]", "located", "in", "[P2]", "carvane",
                                  "[P3]", "part", "of", "[P4]", "borenia", "[/K]"};
    CHECK(p.tokens == want);
    REQUIRE(p.entity_spans.size() == 3);
    CHECK(p.entity_spans[1] == EntitySpan{6, 7, c.mid});
    CHECK(p.entity_spans[2] == EntitySpan{11, 12, c.tail_b});
}

TEST_CASE("2h2c renders the shared prefix once") {
    auto c = chain_kb();
    SubStructure sub{SubStructureKind::TwoHopTwoChain,
                     {RelationPath{c.t, {{c.located, c.mid}, {c.part, c.tail_b}}},
                      RelationPath{c.t, {{c.located, c.mid}, {c.member, c.tail_d}}}}};
    auto p = render(sub, c.kg);
    std::vector<std::string> want{"[K]", "talvorn", "[P1]", "located", "in",      "[P2]",
                                  "carvane", "[P3]", "part", "of",     "[P4]",    "borenia",
                                  "[P5]", "member", "of",   "[P6]",    "delvane", "[/K]"};
    CHECK(p.tokens == want);
    REQUIRE(p.entity_spans.size() == 4);
    check_span_integrity(p, c.kg);

    auto again = render(sub, c.kg);
    CHECK(again.tokens == p.tokens);  // pure function
}

TEST_CASE("render rejects malformed sub-structures") {
    auto c = chain_kb();
    RelationPath one{c.t, {{c.located, c.mid}}};
    RelationPath two{c.t, {{c.located, c.mid}, {c.part, c.tail_b}}};
    RelationPath other{c.t, {{c.part, c.tail_d}, {c.member, c.tail_b}}};
    CHECK_THROWS_AS(render({SubStructureKind::OneHopOneChain, {two}}, c.kg), DataError);
    CHECK_THROWS_AS(render({SubStructureKind::TwoHopOneChain, {one}}, c.kg), DataError);
    CHECK_THROWS_AS(render({SubStructureKind::TwoHopTwoChain, {two}}, c.kg), DataError);
    CHECK_THROWS_AS(render({SubStructureKind::TwoHopTwoChain, {two, other}}, c.kg), DataError);
}

TEST_CASE("make_negative swaps one non-topic span for an outside entity") {
    auto c = chain_kb();
    for (int i = 0; i < 6; ++i) c.kg.add_entity("filler " + std::to_string(i));
    SubStructure sub{SubStructureKind::TwoHopOneChain,
                     {RelationPath{c.t, {{c.located, c.mid}, {c.part, c.tail_b}}}}};
    auto p = render(sub, c.kg);
    std::unordered_set<EntityId> shield{c.t, c.mid, c.tail_b};

    std::set<int> spans_hit;
    std::set<EntityId> replacements;
    for (int seed = 0; seed < 1000; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed));
        auto neg = make_negative(p, c.kg, shield, rng);
        CHECK(neg.label == PromptLabel::Negative);
        REQUIRE(neg.entity_spans.size() == p.entity_spans.size());

        int changed = -1;
        for (std::size_t i = 0; i < neg.entity_spans.size(); ++i)
            if (neg.entity_spans[i].entity != p.entity_spans[i].entity) {
                CHECK(changed == -1);  // exactly one span replaced
                changed = static_cast<int>(i);
            }
        REQUIRE(changed >= 0);
        CHECK(changed != 0);  // never the topic
        EntityId repl = neg.entity_spans[static_cast<std::size_t>(changed)].entity;
        CHECK(shield.count(repl) == 0);
        check_span_integrity(neg, c.kg);
        spans_hit.insert(changed);
        replacements.insert(repl);
    }
    CHECK(spans_hit == std::set<int>{1, 2});
    CHECK(replacements.size() > 1);
}

TEST_CASE("make_negative with no outside entities is an error") {
    auto c = chain_kb();
    SubStructure sub{SubStructureKind::OneHopOneChain, {RelationPath{c.t, {{c.located, c.mid}}}}};
    auto p = render(sub, c.kg);
    std::unordered_set<EntityId> shield{c.t, c.mid, c.tail_b, c.tail_d};
    Rng rng(1);
    CHECK_THROWS_AS(make_negative(p, c.kg, shield, rng), DataError);
}

TEST_CASE("prompt whose spans are all the topic cannot be corrupted or masked") {
    auto c = chain_kb();
    SubStructure sub{SubStructureKind::OneHopOneChain, {RelationPath{c.t, {{c.located, c.t}}}}};
    auto p = render(sub, c.kg);
    Rng rng(1);
    CHECK_THROWS_AS(make_negative(p, c.kg, {}, rng), DataError);
    CHECK_THROWS_AS(mask_entity(p, rng), DataError);
}

TEST_CASE("mask_entity collapses a multi-token span to a single mask") {
    KnowledgeGraph kg;
    EntityId nyc = kg.add_entity("New York City");
    EntityId us = kg.add_entity("United States");
    RelationId loc = kg.add_relation("located_in");
    auto p = render({SubStructureKind::OneHopOneChain, {RelationPath{nyc, {{loc, us}}}}}, kg);

    Rng rng(5);
    auto [masked, entity] = mask_entity(p, rng);
    CHECK(entity == us);  // only one non-topic span to choose
    CHECK(masked.masked_entity == us);
    std::vector<std::string> want{"[K]", "new", "york", "city", "[P1]", "located",
                                  "in",  "[P2]", "[MASK]", "[/K]"};
    CHECK(masked.tokens == want);
    REQUIRE(masked.entity_spans.size() == 1);
    CHECK(masked.entity_spans[0] == EntitySpan{1, 4, nyc});
    CHECK(p.tokens.size() == 11);  // input untouched
}

TEST_CASE("masking an interior span shifts the spans behind it") {
    KnowledgeGraph kg;
    EntityId t = kg.add_entity("Talvorn");
    EntityId mid = kg.add_entity("Port Vane");
    EntityId tail = kg.add_entity("Borenia");
    RelationId r1 = kg.add_relation("located_in");
    RelationId r2 = kg.add_relation("part_of");
    auto p = render({SubStructureKind::TwoHopOneChain,
                     {RelationPath{t, {{r1, mid}, {r2, tail}}}}},
                    kg);

    bool saw_mid = false;
    for (int seed = 0; seed < 20 && !saw_mid; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed));
        auto [masked, entity] = mask_entity(p, rng);
        int masks = 0;
        for (const auto& tok : masked.tokens) masks += tok == tokens::kMask;
        CHECK(masks == 1);
        check_span_integrity(masked, kg);
        if (entity == mid) {
            saw_mid = true;
            // "port vane" (2 tokens) became "[MASK]": everything after moves up one
            REQUIRE(masked.entity_spans.size() == 2);
            CHECK(masked.entity_spans[1].entity == tail);
            CHECK(masked.entity_spans[1].start == p.entity_spans[2].start - 1);
        }
    }
    CHECK(saw_mid);
}

TEST_CASE("duplicate-entity prompt keeps the twin span after masking") {
    auto c = chain_kb();
    SubStructure sub{SubStructureKind::TwoHopTwoChain,
                     {RelationPath{c.t, {{c.located, c.mid}, {c.part, c.tail_b}}},
                      RelationPath{c.t, {{c.located, c.mid}, {c.member, c.tail_b}}}}};
    auto p = render(sub, c.kg);  // borenia appears twice
    Rng rng(3);
    auto [masked, entity] = mask_entity(p, rng);
    int masks = 0, borenias = 0;
    for (const auto& tok : masked.tokens) {
        masks += tok == tokens::kMask;
        borenias += tok == "borenia";
    }
    CHECK(masks == 1);
    if (entity == c.tail_b) CHECK(borenias == 1);
    check_span_integrity(masked, c.kg);
}

TEST_CASE("verbalizer lists canonical form first, then file aliases") {
    KnowledgeGraph kg;
    EntityId q = kg.add_entity("Quillon");
    EntityId ca = kg.add_entity("Carvane");
    RelationId r = kg.add_relation("located_in");
    kg.add_triple(q, r, ca);
    auto path = write_temp("kprompt_verb_alias.tsv", "Quillon\tQuillon Academy\n");
    auto lex = MentionLexicon::build(kg, path);
    auto verb = VerbalizerTable::build(kg, lex);

    CHECK(verb.contains(q));
    CHECK(verb.contains(ca));
    CHECK_FALSE(verb.contains(99));
    CHECK_THROWS_AS(verb.verbalize(99), DataError);

    const auto& qv = verb.verbalize(q);
    REQUIRE(qv.size() == 2);
    CHECK(qv[0] == std::vector<std::string>{"quillon"});
    CHECK(qv[1] == std::vector<std::string>{"quillon", "academy"});
    const auto& cv = verb.verbalize(ca);
    REQUIRE(cv.size() == 1);
    CHECK(cv[0] == std::vector<std::string>{"carvane"});
    std::remove(path.c_str());
}

TEST_CASE("verbalizer mirrors an independent scan of the alias file") {
    KnowledgeGraph kg;
    std::vector<EntityId> es;
    es.push_back(kg.add_entity("Alpha Site"));
    es.push_back(kg.add_entity("Beta"));
    es.push_back(kg.add_entity("Gamma Ridge"));
    auto path = write_temp("kprompt_verb_scan.tsv",
                           "Beta\tbeta station\nAlpha Site\tthe alpha\nBeta\toutpost b\n");
    auto lex = MentionLexicon::build(kg, path);
    auto verb = VerbalizerTable::build(kg, lex);

    std::vector<std::vector<std::vector<std::string>>> expect = {
        {{"alpha", "site"}, {"the", "alpha"}},
        {{"beta"}, {"beta", "station"}, {"outpost", "b"}},
        {{"gamma", "ridge"}},
    };
    for (std::size_t i = 0; i < es.size(); ++i) CHECK(verb.verbalize(es[i]) == expect[i]);
    std::remove(path.c_str());
}
