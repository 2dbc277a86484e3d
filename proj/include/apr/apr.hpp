#pragma once

// Umbrella header: the full adaptive parallel reasoning toolkit.

#include "apr/answer.hpp"
#include "apr/backend.hpp"
#include "apr/codec.hpp"
#include "apr/dataset.hpp"
#include "apr/http_backend.hpp"
#include "apr/jsonl.hpp"
#include "apr/metrics.hpp"
#include "apr/mock_backend.hpp"
#include "apr/orchestrator.hpp"
#include "apr/reward.hpp"
#include "apr/synthetic.hpp"
#include "apr/trajectory.hpp"
#include "apr/trie.hpp"
#include "apr/version.hpp"
