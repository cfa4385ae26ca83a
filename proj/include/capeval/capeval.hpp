#pragma once

// Umbrella header. http_backend.hpp is left out so that offline users do
// not pay for the HTTP client; include it directly when talking to a live
// endpoint.

#include "capeval/backend.hpp"
#include "capeval/error.hpp"
#include "capeval/explanations.hpp"
#include "capeval/judgments.hpp"
#include "capeval/pipeline.hpp"
#include "capeval/scoring.hpp"
#include "capeval/stats.hpp"
#include "capeval/templates.hpp"
