import logging

from django.http import HttpResponse, JsonResponse
from django.views.decorators.csrf import csrf_exempt
from django.views.decorators.http import require_GET, require_POST

from bbtune.exceptions import InvalidParameterError, ProtocolError
from bbtune.oracle import service

logger = logging.getLogger(__name__)


@csrf_exempt
@require_POST
def score(request):
    try:
        body = service.score(request.body)
    except (ProtocolError, InvalidParameterError) as exc:
        logger.warning(f"Rejected scoring request: {exc}")
        return JsonResponse({"error": str(exc)}, status=400)
    response = HttpResponse(body, content_type="application/json")
    response['Cache-Control'] = 'no-store'
    return response


@require_GET
def model(request):
    return JsonResponse(service.model_document())


@require_GET
def health(request):
    return JsonResponse(service.health_document())
