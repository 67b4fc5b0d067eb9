#pragma once

// Live catalog client for the YouTube Data API v3. Include only from translation units
// compiled with CPPHTTPLIB_OPENSSL_SUPPORT; the key comes from VIDCURATE_API_KEY.

#include <cstdlib>
#include <regex>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"

namespace vidcurate {

/// ISO-8601 duration such as "PT1H2M3S" to seconds.
inline std::int64_t parse_iso_duration(const std::string& s) {
    static const std::regex re(R"(P(?:(\d+)D)?(?:T(?:(\d+)H)?(?:(\d+)M)?(?:(\d+)S)?)?)");
    std::smatch m;
    if (!std::regex_match(s, m, re)) throw DataError("bad duration '" + s + "'");
    auto part = [&](int i) -> std::int64_t { return m[i].matched ? std::stoll(m[i].str()) : 0; };
    return part(1) * 86400 + part(2) * 3600 + part(3) * 60 + part(4);
}

class LiveCatalogClient final : public CatalogClient {
public:
    explicit LiveCatalogClient(std::string api_key, std::string host = "https://www.googleapis.com")
        : key_(std::move(api_key)), client_(host) {
        if (key_.empty()) throw UsageError("VIDCURATE_API_KEY is empty");
        client_.set_connection_timeout(10);
        client_.set_read_timeout(30);
    }

    static LiveCatalogClient from_env() {
        const char* key = std::getenv("VIDCURATE_API_KEY");
        if (!key) throw UsageError("live ingest needs VIDCURATE_API_KEY in the environment");
        return LiveCatalogClient(key);
    }

    std::vector<VideoRecord> search(const std::string& term, int max_results) override {
        const auto found = get("/youtube/v3/search", {{"part", "snippet"},
                                                      {"type", "video"},
                                                      {"q", term},
                                                      {"maxResults", std::to_string(max_results)}});
        std::vector<std::string> ids;
        for (const auto& item : found.at("items")) ids.push_back(item.at("id").at("videoId").get<std::string>());
        if (ids.empty()) return {};
        std::string joined;
        for (const auto& id : ids) joined += (joined.empty() ? "" : ",") + id;
        const auto details = get("/youtube/v3/videos", {{"part", "snippet,contentDetails,statistics"}, {"id", joined}});
        std::map<std::string, VideoRecord> by_id;
        for (const auto& item : details.at("items")) {
            auto r = to_record(item);
            by_id.emplace(r.video_id, std::move(r));
        }
        std::vector<VideoRecord> out;  // keep search order; ids the videos call omitted are dropped
        for (const auto& id : ids)
            if (auto it = by_id.find(id); it != by_id.end()) out.push_back(it->second);
        return out;
    }

private:
    nlohmann::json get(const std::string& path, httplib::Params params) {
        params.emplace("key", key_);
        const auto res = client_.Get(path, params, httplib::Headers{});
        if (!res) throw DataError("catalog request failed: " + httplib::to_string(res.error()));
        if (res->status != 200) throw DataError("catalog returned HTTP " + std::to_string(res->status));
        return nlohmann::json::parse(res->body);
    }

    static std::int64_t count(const nlohmann::json& stats, const char* key) {
        auto it = stats.find(key);
        return it == stats.end() ? 0 : std::stoll(it->get<std::string>());
    }

    static VideoRecord to_record(const nlohmann::json& item) {
        VideoRecord r;
        const auto& sn = item.at("snippet");
        const auto& cd = item.at("contentDetails");
        const auto stats = item.value("statistics", nlohmann::json::object());
        r.video_id = item.at("id").get<std::string>();
        r.channel_id = sn.at("channelId").get<std::string>();
        r.publish_time = parse_timestamp(sn.at("publishedAt").get<std::string>());
        r.title = sn.value("title", "");
        r.description = sn.value("description", "");
        r.tags = sn.value("tags", std::vector<std::string>{});
        r.duration_seconds = parse_iso_duration(cd.value("duration", "PT0S"));
        r.definition = cd.value("definition", "sd") == "hd" ? Definition::hd : Definition::sd;
        r.captions_available = cd.value("caption", "false") == "true";
        r.view_count = count(stats, "viewCount");
        r.like_count = count(stats, "likeCount");
        r.dislike_count = count(stats, "dislikeCount");
        r.comment_count = count(stats, "commentCount");
        if (auto lang = sn.find("defaultAudioLanguage"); lang != sn.end()) r.language = lang->get<std::string>();
        else if (auto l2 = sn.find("defaultLanguage"); l2 != sn.end()) r.language = l2->get<std::string>();
        if (auto ch = sn.find("channelTitle"); ch != sn.end()) r.extra["channel_title"] = *ch;
        return r;
    }

    std::string key_;
    httplib::Client client_;
};

}  // namespace vidcurate
