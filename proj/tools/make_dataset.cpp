// Emits the bundled synthetic benchmark: a fictional scholars-and-cities KB,
// a templated corpus whose sentences mention the 1- and 2-hop tails needed to
// keep sub-graph paths alive, cloze probe cases phrased like the prompt
// verbalizations, and the release training config.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "kprompt/rng.hpp"

namespace {

using json = nlohmann::json;

const char* kCountries[12] = {"Aralia",  "Borenia",  "Cadrexa",  "Delvane",
                              "Eprustan", "Fendaria", "Gorsholm", "Hastovia",
                              "Ilvera",  "Jentland", "Kovaria",  "Lumeria"};

// Two consecutive cities per country: country(city j) = j / 2.
const char* kCities[24] = {"Avesta",  "Arnholt", "Brellin", "Bosmere", "Carvane", "Cestwick",
                           "Dorvik",  "Drelna",  "Elvora",  "Estmere", "Favrin",  "Folvane",
                           "Galdra",  "Gorvex",  "Hevlin",  "Harmuth", "Istvane", "Ilmora",
                           "Jorvale", "Jesmere", "Kelvane", "Kormath", "Lorvik",  "Luvena"};

const char* kInstitutes[12] = {"Quillon",  "Ravessa", "Sandovex", "Talvorn",
                               "Umbrest",  "Vandrik", "Welkara",  "Xandrel",
                               "Ystrava",  "Zelmora", "Orvikum",  "Telsara"};

const char* kFields[12] = {"glaciology",  "mycology",    "volcanology", "seismology",
                           "botany",      "astronomy",   "linguistics", "geometry",
                           "cartography", "meteorology", "toxicology",  "archaeology"};

const char* kFirst[36] = {"Mira",   "Oren",  "Talia",  "Edvin",  "Sorel",   "Anneke",
                          "Rudo",   "Petra", "Casimir", "Lena",  "Bohdan",  "Yara",
                          "Feodor", "Ilsa",  "Marek",  "Nadya",  "Otto",    "Priya",
                          "Quentin", "Ruta", "Stellan", "Tova",  "Ulric",   "Vesna",
                          "Wendel", "Xenia", "Yusuf",  "Zelda",  "Arvid",   "Brona",
                          "Cedric", "Dagny", "Emeric", "Freya",  "Gunnar",  "Hilde"};

const char* kLast[36] = {"Toval",   "Kastel",  "Brenmark", "Duleth",   "Evarin",  "Fosgren",
                         "Galdran", "Hestvik", "Ivenko",   "Jorvek",   "Kelshaw", "Lomvard",
                         "Morvath", "Nersted", "Olvane",   "Prekov",   "Quenlis", "Rostvik",
                         "Selmark", "Tervan",  "Ulmstad",  "Vostrel",  "Wendrik", "Xalvik",
                         "Yorvend", "Zalenko", "Ankerud",  "Bolvane",  "Crovane", "Drelmark",
                         "Ervik",   "Fandel",  "Grelund",  "Hovstad",  "Imrek",   "Jelvand"};

// Coprime strides keep the relation assignments decorrelated, so no probe
// group is answerable from another group's answer.
int born_city(int i) { return (11 * i + 2) % 24; }
int field_of(int i) { return (7 * i + 1) % 12; }
int institute_of(int i) { return (5 * i + 3) % 12; }
int country_of(int j) { return j / 2; }
int twin_of(int j) { return (j + 13) % 24; }
int institute_city(int m) { return (2 * m + 5) % 24; }

std::string scientist(int i) { return std::string(kFirst[i]) + " " + kLast[i]; }

std::string lower(std::string s) {
    for (char& c : s)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return s;
}

struct Record {
    std::string text;
    std::string topic;
};

void emit_corpus_pass(std::vector<Record>& out) {
    for (int i = 0; i < 36; ++i) {
        std::string s = scientist(i);
        std::string b = kCities[born_city(i)];
        std::string cb = kCountries[country_of(born_city(i))];
        std::string tw = kCities[twin_of(born_city(i))];
        std::string f = kFields[field_of(i)];
        std::string inst = kInstitutes[institute_of(i)];
        std::string ci = kCities[institute_city(institute_of(i))];

        out.push_back({s + " was born in " + b + ".", s});
        out.push_back({s + " was born in " + b + ", a city of " + cb + ".", s});
        out.push_back({s + " was born in " + b + ", which lies in " + cb + ".", s});
        out.push_back({s + " was born in " + b + ", which is twinned with " + tw +
                           " and lies in " + cb + ".",
                       s});
        out.push_back({s + " was born in " + b + ", twinned with " + tw + ".", s});
        out.push_back({s + " works in " + f + ".", s});
        out.push_back({s + " works in " + f + " and was born in " + b + ".", s});
        out.push_back({s + " studied at " + inst + ".", s});
        out.push_back({s + " studied at " + inst + " in " + ci + ".", s});
        out.push_back({s + " studied at " + inst + " and works in " + f + ".", s});
        out.push_back({"Born in " + b + ", " + s + " works in " + f + ".", s});
        out.push_back({s + " was born in " + b + " and studied at " + inst + ".", s});
        out.push_back({s + " works in " + f + ", having studied at " + inst + ".", s});
        out.push_back({s + " studied at " + inst + ", which is located in " + ci + ".", s});
        out.push_back({s + ", who works in " + f + ", was born in " + b + ", which lies in " +
                           cb + ".",
                       s});
        out.push_back({s + ", who works in " + f + " and studied at " + inst +
                           ", was born in " + b + ", which is twinned with " + tw +
                           " and lies in " + cb + ".",
                       s});
    }
    for (int j = 0; j < 24; ++j) {
        std::string c = kCities[j];
        std::string k = kCountries[country_of(j)];
        std::string t = kCities[twin_of(j)];
        out.push_back({c + " lies in " + k + ".", c});
        out.push_back({c + " is a city of " + k + ".", c});
        out.push_back({c + " is twinned with " + t + ".", c});
        out.push_back({c + ", twinned with " + t + ", lies in " + k + ".", c});
    }
    for (int m = 0; m < 12; ++m) {
        std::string n = kInstitutes[m];
        std::string ci = kCities[institute_city(m)];
        out.push_back({n + " is located in " + ci + ".", n});
        out.push_back({n + " can be found in " + ci + ".", n});
    }
}

}  // namespace

int main(int argc, char** argv) {
    std::string out_dir = argc > 1 ? argv[1] : "data";
    std::filesystem::create_directories(out_dir);

    {
        std::ofstream tsv(out_dir + "/kb_triples.tsv", std::ios::trunc);
        tsv << "# synthetic scholars-and-cities knowledge base\n";
        for (int i = 0; i < 36; ++i) {
            tsv << scientist(i) << "\tborn_in\t" << kCities[born_city(i)] << "\n";
            tsv << scientist(i) << "\tworks_in\t" << kFields[field_of(i)] << "\n";
            tsv << scientist(i) << "\tstudied_at\t" << kInstitutes[institute_of(i)] << "\n";
        }
        for (int j = 0; j < 24; ++j) {
            tsv << kCities[j] << "\tlocated_in\t" << kCountries[country_of(j)] << "\n";
            tsv << kCities[j] << "\ttwinned_with\t" << kCities[twin_of(j)] << "\n";
        }
        for (int m = 0; m < 12; ++m)
            tsv << kInstitutes[m] << "\tlocated_in\t" << kCities[institute_city(m)] << "\n";
    }

    {
        std::ofstream tsv(out_dir + "/kb_aliases.tsv", std::ios::trunc);
        tsv << "# extra surface forms; canonical names are implicit\n";
        for (int i = 0; i < 36; ++i) tsv << scientist(i) << "\t" << kLast[i] << "\n";
        for (int m = 0; m < 12; ++m)
            tsv << kInstitutes[m] << "\t" << kInstitutes[m] << " Academy\n";
    }

    std::vector<Record> pass;
    emit_corpus_pass(pass);
    std::vector<Record> corpus;
    for (int rep = 0; rep < 3; ++rep) corpus.insert(corpus.end(), pass.begin(), pass.end());
    kprompt::Rng rng(0xda7a5eedULL);
    rng.shuffle(corpus);

    {
        std::ofstream jl(out_dir + "/corpus.jsonl", std::ios::trunc);
        for (const Record& r : corpus)
            jl << json{{"text", r.text}, {"topic_entity", r.topic}}.dump() << "\n";
    }

    {
        // Probe templates use the bare relation wording ("born in", not "was
        // born in") so a hit requires the fact itself, not a memorised corpus
        // sentence completion. Scientist relations only: their tails are the
        // ones the auxiliary objectives drill, so they carry the signal.
        std::ofstream jl(out_dir + "/probe_cases.jsonl", std::ios::trunc);
        json cities = json::array(), fields = json::array(), insts = json::array();
        for (const char* c : kCities) cities.push_back(lower(c));
        for (const char* f : kFields) fields.push_back(lower(f));
        for (const char* n : kInstitutes) insts.push_back(lower(n));
        for (int i = 0; i < 36; ++i) {
            std::string s = lower(scientist(i));
            jl << json{{"template", s + " born in [MASK]"},
                       {"subject", scientist(i)},
                       {"answer", lower(kCities[born_city(i)])},
                       {"candidates", cities},
                       {"group", "born_in"}}
                      .dump()
               << "\n";
            jl << json{{"template", s + " works in [MASK]"},
                       {"subject", scientist(i)},
                       {"answer", lower(kFields[field_of(i)])},
                       {"candidates", fields},
                       {"group", "works_in"}}
                      .dump()
               << "\n";
            jl << json{{"template", s + " studied at [MASK]"},
                       {"subject", scientist(i)},
                       {"answer", lower(kInstitutes[institute_of(i)])},
                       {"candidates", insts},
                       {"group", "studied_at"}}
                      .dump()
               << "\n";
        }
    }

    {
        std::ofstream conf(out_dir + "/train.conf", std::ios::trunc);
        conf << "# release training configuration for the bundled benchmark\n"
                "triples = data/kb_triples.tsv\n"
                "aliases = data/kb_aliases.tsv\n"
                "corpus = data/corpus.jsonl\n"
                "probe_cases = data/probe_cases.jsonl\n"
                "\n"
                "hidden = 64\n"
                "layers = 2\n"
                "heads = 4\n"
                "ffn_mult = 4\n"
                "dropout = 0.0\n"
                "\n"
                "k = 2\n"
                "max_seq_len = 128\n"
                "num_negatives = 10\n"
                "mlm_rate = 0.15\n"
                "\n"
                "# peak rate for from-scratch training at this scale; the reference\n"
                "# continued-pretraining rate of 1e-5 stalls a randomly initialized model\n"
                "lr = 3e-3\n"
                "weight_decay = 0.01\n"
                "clip_norm = 1.0\n"
                "\n"
                "batch_size = 8\n"
                "epochs = 24\n"
                "warmup_frac = 0.1\n"
                "lambda = 0.5\n"
                "mu = 0.5\n"
                "holdout_frac = 0.1\n"
                "seed = 17\n";
    }

    std::cout << "wrote " << corpus.size() << " sentences, 108 probe cases under " << out_dir
              << "\n";
    return 0;
}
