# Generated by Django 5.2.7 on 2026-10-17 10:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ProtocolRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(choices=[('merge', 'Merge'), ('query', 'Query'), ('embed', 'Embed'), ('complete', 'Complete'), ('demo_loop', 'Guarantee loop demo'), ('selftest', 'Self test')], max_length=20)),
                ('seed', models.BigIntegerField(default=0)),
                ('parties', models.PositiveSmallIntegerField(default=2)),
                ('rounds', models.PositiveIntegerField(default=0)),
                ('party_messages', models.PositiveIntegerField(default=0)),
                ('dealer_messages', models.PositiveIntegerField(default=0)),
                ('bytes_sent', models.BigIntegerField(default=0)),
                ('transcript_digest', models.CharField(blank=True, max_length=64)),
                ('status', models.CharField(choices=[('ok', 'OK'), ('error', 'Error'), ('failed', 'Acceptance failed')], default='ok', max_length=10)),
                ('summary', models.JSONField(blank=True, default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'db_table': 'protocol_runs',
                'ordering': ['-created_at'],
            },
        ),
    ]
