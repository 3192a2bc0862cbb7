from django.urls import path

from bbtune.oracle import views

urlpatterns = [
    path('v1/score', views.score, name='score'),
    path('v1/model', views.model, name='model'),
    path('health', views.health, name='health'),
]
