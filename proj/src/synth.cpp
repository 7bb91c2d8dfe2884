#include "dmv/synth.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "dmv/io.hpp"
#include "dmv/rng.hpp"

namespace dmv {

namespace {

struct State {
  const char* abbr;
  const char* desc;
  const char* id;
  double lat;
  double lon;
};

constexpr std::array<State, 11> kStates{{
    {"WA", "Washington", "53", 47.4, -120.5},
    {"OR", "Oregon", "41", 43.9, -120.6},
    {"CA", "California", "06", 37.2, -119.5},
    {"NV", "Nevada", "32", 39.3, -116.6},
    {"ID", "Idaho", "16", 44.4, -114.6},
    {"MT", "Montana", "30", 47.0, -109.6},
    {"WY", "Wyoming", "56", 43.0, -107.5},
    {"UT", "Utah", "49", 39.3, -111.7},
    {"CO", "Colorado", "08", 39.0, -105.5},
    {"AZ", "Arizona", "04", 34.3, -111.7},
    {"NM", "New Mexico", "35", 34.4, -106.1},
}};

struct Question {
  const char* cls;
  const char* class_id;
  const char* topic;
  const char* topic_id;
  const char* question;
  const char* question_id;
  const char* unit;
  double base;
};

constexpr std::array<Question, 8> kQuestions{{
    {"Mental Health", "C01", "Frequent mental distress", "TMC03",
     "Percentage of older adults who are experiencing frequent mental distress", "Q03", "%", 9.0},
    {"Overall Health", "C02", "Physically unhealthy days", "TOC11",
     "Mean number of days with activity limitations in the past month", "Q11", "Number", 6.1},
    {"Caregiving", "C03", "Expect to provide care for someone in the next two years", "TCC02",
     "Percentage of older adults currently not providing care who expect to provide care for someone with health "
     "problems in the next two years",
     "Q42", "%", 14.5},
    {"Nutrition/Physical Activity/Obesity", "C04", "Obesity", "TNC04",
     "Percentage of older adults who are currently obese, with a body mass index (BMI) of 30 or more", "Q19", "%",
     69.4},
    {"Overall Health", "C02", "Self-rated health (good to excellent health)", "TGC15",
     "Percentage of older adults who self-reported that their health is \"good\", \"very good\", or \"excellent\"",
     "Q15", "%", 72.9},
    {"Mental Health", "C01", "Lifetime diagnosis of depression", "TMC01",
     "Percentage of older adults with a lifetime diagnosis of depression", "Q01", "%", 17.0},
    {"Overall Health", "C02", "Fall with injury within last year", "TOC07",
     "Percentage of older adults who have fallen and sustained an injury within the past year", "Q07", "%", 10.5},
    {"Screenings and Vaccines", "C05", "Influenza vaccine within past year", "TSC08",
     "Percentage of older adults who reported influenza vaccine within the past year", "Q08", "%", 58.3},
}};

struct Stratum {
  const char* name;
  const char* id;
  double shift;
};

constexpr std::array<Stratum, 3> kAgeGroups{{
    {"50-64 years", "5064", -3.0},
    {"65 years or older", "65PLUS", 4.0},
    {"Overall", "AGE_OVERALL", 0.0},
}};

struct Stratum2 {
  const char* category;
  const char* category_id;
  const char* name;
  const char* id;
};

constexpr std::array<Stratum2, 6> kSecond{{
    {"Gender", "GENDER", "Male", "MALE"},
    {"Gender", "GENDER", "Female", "FEMALE"},
    {"Race/Ethnicity", "RACE", "White, non-Hispanic", "WHT"},
    {"Race/Ethnicity", "RACE", "Hispanic", "HIS"},
    {"Race/Ethnicity", "RACE", "Black, non-Hispanic", "BLK"},
    {"Race/Ethnicity", "RACE", "Asian/Pacific Islander", "ASN"},
}};

double round_to(double v, double scale) { return std::round(v * scale) / scale; }

}  // namespace

double synthetic_target(std::string_view question, std::string_view stratification1, double yearstart,
                        double latitude) {
  const Question* q = nullptr;
  for (const auto& c : kQuestions) {
    if (question == c.question) q = &c;
  }
  const Stratum* s = nullptr;
  for (const auto& c : kAgeGroups) {
    if (stratification1 == c.name) s = &c;
  }
  if (q == nullptr || s == nullptr) return std::numeric_limits<double>::quiet_NaN();
  return q->base + s->shift + 0.8 * (yearstart - 2015.0) + 1.5 * (latitude - 40.0);
}

RawTable synthesize_cdc(std::size_t rows, std::uint64_t seed) {
  RawTable table{ColumnSchema::cdc_default(), {}};
  const auto& schema = table.schema;
  SplitMix64 rng(seed);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng.below(n)); };

  table.rows.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& st = kStates[pick(kStates.size())];
    const auto& q = kQuestions[pick(kQuestions.size())];
    const auto& age = kAgeGroups[pick(kAgeGroups.size())];
    const int year = 2015 + static_cast<int>(pick(8));
    const int year_end = year + static_cast<int>(pick(2));
    const double lat = round_to(st.lat + (rng.uniform() * 5.0 - 2.5), 1e6);
    const double lon = round_to(st.lon + (rng.uniform() * 5.0 - 2.5), 1e6);
    const bool has_second = rng.uniform() >= 0.3;
    const auto& second = kSecond[pick(kSecond.size())];
    const bool labeled = rng.uniform() >= 0.01;
    const bool has_line = rng.uniform() >= 0.5;

    const GeoPoint point{lat, lon};
    const std::string wkt = format_wkt(point);
    const double parsed_lat = parse_geolocation(wkt).latitude;
    const double value = synthetic_target(q.question, age.name, year, parsed_lat);

    Row row(schema.size());
    auto set = [&](std::string_view name, std::optional<std::string> v) { row[schema.index_of(name)] = std::move(v); };
    set("rowid", "BRFSS~" + std::to_string(year) + "~" + std::to_string(year_end) + "~" + st.id + "~" +
                     q.question_id + "~" + age.id + "~R" + std::to_string(r));
    set("yearstart", std::to_string(year));
    set("yearend", std::to_string(year_end));
    set("locationabbr", st.abbr);
    set("locationdesc", st.desc);
    set("datasource", "BRFSS");
    set("class", q.cls);
    set("topic", q.topic);
    set("question", q.question);
    set("data_value_unit", q.unit);
    set("datavaluetypeid", std::string(q.unit) == "%" ? "PRCTG" : "MEAN");
    set("data_value_type", std::string(q.unit) == "%" ? "Percentage" : "Mean");
    if (labeled) {
      set("data_value", io::format_double(value));
      set("data_value_alt", io::format_double(value));
      set("low_confidence_limit", io::format_double(round_to(value - 1.0 - rng.uniform(), 10)));
      set("high_confidence_limit", io::format_double(round_to(value + 1.0 + rng.uniform(), 10)));
    } else {
      set("data_value_footnote", "Sample size of denominator and/or age group is too small");
    }
    set("stratificationcategory1", "Age Group");
    set("stratification1", age.name);
    set("stratificationcategoryid1", "AGE");
    set("stratificationid1", age.id);
    if (has_second) {
      set("stratificationcategory2", second.category);
      set("stratification2", second.name);
      set("stratificationcategoryid2", second.category_id);
      set("stratificationid2", second.id);
    }
    set("geolocation", wkt);
    set("classid", q.class_id);
    set("topicid", q.topic_id);
    set("questionid", q.question_id);
    set("locationid", st.id);
    if (has_line) set("linespread", std::to_string(1 + pick(3)));
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace dmv
