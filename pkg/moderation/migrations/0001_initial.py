# Generated by Django 5.2.10 on 2026-10-19 10:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='GameRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(help_text='Nome do jogo', max_length=200, unique=True)),
                ('description', models.TextField(blank=True, help_text='Descrição livre')),
                ('agent_names', models.JSONField(help_text='Nome de cada agente')),
                ('action_labels', models.JSONField(help_text='Rótulos das ações, uma lista por agente')),
                ('utilities', models.JSONField(help_text='Uma lista de M utilidades por agente')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'verbose_name': 'Jogo',
                'verbose_name_plural': 'Jogos',
                'ordering': ['name'],
            },
        ),
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('mode', models.CharField(choices=[('learn-qr', 'Aprendizado QR'), ('recommend', 'Recomendações de baixo regret'), ('check-equiv', 'Equivalência'), ('check-br-indist', 'Indistinguibilidade BR'), ('simulate', 'Simulação com mecanismo fixo'), ('gen-game', 'Geração de jogo')], max_length=20)),
                ('config', models.JSONField(help_text='Configuração validada')),
                ('status', models.CharField(choices=[('pending', 'Pendente'), ('running', 'Executando'), ('finished', 'Concluída'), ('failed', 'Falhou')], default='pending', max_length=10)),
                ('summary', models.JSONField(blank=True, help_text='Resumo da execução', null=True)),
                ('output_dir', models.CharField(blank=True, max_length=1000)),
                ('error', models.TextField(blank=True, help_text='Mensagem de erro, se houver')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'verbose_name': 'Execução',
                'verbose_name_plural': 'Execuções',
                'ordering': ['-created_at', '-id'],
            },
        ),
    ]
