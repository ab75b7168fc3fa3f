#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>

#include <pdelin/config.hpp>
#include <pdelin/parallel.hpp>

using namespace pdelin;

TEST(Config, SectionsCommentsAndTypes) {
    auto c = Config::parse("; leading comment\n# hash comment\n[problem]\nfamily = volterra\nn = 1e8\nseed=7\n"
                           "list = 1e4, 1e6 ,1e8\n\n[other]\nname = x y\n",
                           "demo.ini");
    EXPECT_EQ(c.get_string("problem.family"), "volterra");
    EXPECT_EQ(c.get_int("problem.n"), 100000000);
    EXPECT_EQ(c.get_seed("problem.seed"), 7u);
    EXPECT_EQ(c.get_doubles("problem.list"), (std::vector<double>{1e4, 1e6, 1e8}));
    EXPECT_EQ(c.get_string("other.name"), "x y");
    EXPECT_EQ(c.where("problem.n"), "demo.ini:5");
    EXPECT_EQ(c.get_double("problem.missing", 2.5), 2.5);
    EXPECT_EQ(c.get_seed("problem.absent"), 0u);
}

TEST(Config, ExponentAndPlainIntegersAgree) {
    auto c = Config::parse("a = 1e8\nb = 100000000\n");
    EXPECT_EQ(c.get_int("a"), c.get_int("b"));
    EXPECT_EQ(c.get_double("a"), c.get_double("b"));
}

TEST(Config, MissingKeyNamesTheKey) {
    auto c = Config::parse("[problem]\nfamily = volterra\n", "sim.ini");
    try {
        c.get_double("problem.n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("`problem.n`"), std::string::npos);
    }
}

TEST(Config, BadValueIsLineAnchored) {
    auto c = Config::parse("[problem]\nfamily = volterra\nn = lots\n", "sim.ini");
    try {
        c.get_double("problem.n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("sim.ini:3"), std::string::npos) << e.what();
    }
    EXPECT_THROW(Config::parse("x = 1.5\n").get_int("x"), ConfigError);
    EXPECT_THROW(Config::parse("x = -1\n").get_seed("x"), ConfigError);
}

TEST(Config, SyntaxErrorsAreLineAnchored) {
    for (auto [text, line] : {std::pair{"[a]\nok = 1\nnot a pair\n", ":3:"}, std::pair{"[a\n", ":1:"},
                              std::pair{"[a]\nk = 1\nk = 2\n", ":3:"}}) {
        try {
            Config::parse(text, "bad.ini");
            FAIL() << text;
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(std::string("bad.ini") + line), std::string::npos) << e.what();
        }
    }
}

TEST(Config, LoadMissingFileIsConfigError) {
    EXPECT_THROW(Config::load("/nonexistent/path/cfg.ini"), ConfigError);
}

TEST(Parallel, VisitsEveryIndexOnce) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(Parallel, RethrowsLowestFailingIndex) {
    try {
        parallel_for(100, [](std::size_t i) {
            if (i % 10 == 3) throw DomainError("fail " + std::to_string(i));
        });
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_STREQ(e.what(), "fail 3");
    }
}

TEST(Parallel, ThreadEnvironmentVariable) {
    ::setenv("PDELIN_THREADS", "3", 1);
    EXPECT_EQ(thread_count(), 3u);
    ::setenv("PDELIN_THREADS", "zero", 1);
    EXPECT_THROW(thread_count(), ConfigError);
    ::unsetenv("PDELIN_THREADS");
    EXPECT_GE(thread_count(), 1u);
}
