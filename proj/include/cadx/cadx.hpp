#pragma once

#include "cadx/arbitration.hpp"
#include "cadx/config.hpp"
#include "cadx/error.hpp"
#include "cadx/explain/answer.hpp"
#include "cadx/explain/bleu.hpp"
#include "cadx/explain/contributions.hpp"
#include "cadx/explain/query.hpp"
#include "cadx/explain/rationale.hpp"
#include "cadx/features.hpp"
#include "cadx/imaging/augment.hpp"
#include "cadx/imaging/extract.hpp"
#include "cadx/imaging/heatmap.hpp"
#include "cadx/imaging/image.hpp"
#include "cadx/ingest.hpp"
#include "cadx/readersim.hpp"
#include "cadx/risk/assess.hpp"
#include "cadx/risk/model.hpp"
#include "cadx/risk/score_table.hpp"
#include "cadx/service/api.hpp"
#include "cadx/service/event_log.hpp"
#include "cadx/service/report.hpp"
#include "cadx/service/store.hpp"
#include "cadx/stats.hpp"
#include "cadx/synth.hpp"
